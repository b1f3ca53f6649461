//! `cojump`: simulate bivariate jump-diffusions, run threshold estimators on paths or
//! increments, run Monte-Carlo experiments and align tick data.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use cojump_core::experiments::{self, ExperimentReport};
use cojump_core::io::{self as cio, PriceScale, RunConfig, RunManifest};
use cojump_core::simulate::{simulate_path, CutoffPolicy};
use cojump_core::{estimate, EstimatorOptions, ModelSpec, SimConfig, ThresholdRule, Truncation};
use serde::Serialize;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  unexpected internal failure
  2  usage error (unknown flag, missing argument)
  3  unreadable or malformed input (config, CSV, tick file)
  4  invalid parameters or violated invariant
  5  output could not be written
  6  experiment finished but a check failed (with --strict)

Errors are reported on stderr as one line:
  error code=<n> kind=<kind> message=\"<text>\"";

#[derive(Parser, Debug)]
#[command(name = "cojump", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one path pair and write it as a paths CSV plus a run manifest.
    Simulate(SimulateArgs),
    /// Threshold statistics of a paths or increments CSV.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment plan.
    Experiment(ExperimentArgs),
    /// Align two tick files on a common grid (previous-tick sampling) and write increments.
    Ingest(IngestArgs),
}

/// Overrides applied on top of a model config.
#[derive(Args, Debug, Default)]
struct ModelOverrides {
    /// Lévy copula mixing weight γ in [0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Activity index of the component-1 infinite-activity jumps.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Activity index of the component-2 infinite-activity jumps.
    #[arg(long)]
    alpha2: Option<f64>,
}

impl ModelOverrides {
    fn apply(&self, model: &mut ModelSpec) -> anyhow::Result<()> {
        if let Some(g) = self.gamma {
            model.copula = cojump_core::CopulaSpec::new(g)?;
        }
        for (q, a) in [(0, self.alpha1), (1, self.alpha2)] {
            let Some(a) = a else { continue };
            let slot = if q == 0 {
                &mut model.ia1
            } else {
                &mut model.ia2
            };
            match slot {
                Some(spec) => {
                    spec.alpha = a;
                    if let Some(neg) = spec.negative.as_mut() {
                        neg.alpha = a;
                    }
                }
                None => bail!(invalid(format!(
                    "--alpha{} given but the model has no ia{} jumps",
                    q + 1,
                    q + 1
                ))),
            }
        }
        model.validate()?;
        Ok(())
    }
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// Threshold exponent β in r_h = c h^β.
    #[arg(long)]
    beta: Option<f64>,
    /// Threshold coefficient c in r_h = c h^β.
    #[arg(long)]
    coeff: Option<f64>,
    /// Use this squared-increment threshold directly instead of c h^β.
    #[arg(long, conflicts_with_all = ["beta", "coeff"])]
    threshold: Option<f64>,
}

impl ThresholdArgs {
    /// Flags win over the config; defaults are β = 0.9, c = 1.
    fn rule(&self, from_config: Option<ThresholdRule>) -> anyhow::Result<ThresholdRule> {
        let base = from_config.unwrap_or_default();
        Ok(ThresholdRule::new(
            self.coeff.unwrap_or(base.coeff),
            self.beta.unwrap_or(base.beta),
        )?)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML config with a [model] table and optional [simulation] table.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of grid steps.
    #[arg(long)]
    n: Option<usize>,
    /// Truncation level ε₀ of the infinite-activity series.
    #[arg(long)]
    cutoff: Option<f64>,
    #[command(flatten)]
    model: ModelOverrides,
    /// Paths CSV to write; the manifest goes to <output>.manifest.json.
    #[arg(long, short, default_value = "paths.csv")]
    output: PathBuf,
    /// Also write the increments CSV here.
    #[arg(long)]
    increments: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Paths CSV (from `simulate`) or increments CSV (from `ingest`).
    #[arg(long, short)]
    input: PathBuf,
    /// Optional config whose [threshold] table sets c and β.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Reference value of the integrated covariation for the normalized bias;
    /// defaults to the ground truth stored in a simulated paths file.
    #[arg(long)]
    truth: Option<f64>,
    /// Fixed summation order (byte-stable output). `--deterministic false` allows parallel
    /// reductions on long inputs.
    #[arg(long, default_value_t = true, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    deterministic: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    /// Report file; stdout when omitted. A manifest is written next to it.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML experiment plan.
    #[arg(long, visible_alias = "config")]
    plan: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of replications per rung.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    coeff: Option<f64>,
    #[command(flatten)]
    model: ModelOverrides,
    /// Output stem: writes <stem>.csv (per-rung table), <stem>.json, <stem>.txt and
    /// <stem>.manifest.json. The summary always goes to stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Exit with code 6 when any check fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// First asset: CSV with columns time,price (seconds, positive prices).
    #[arg(long)]
    a: PathBuf,
    /// Second asset, same format.
    #[arg(long)]
    b: PathBuf,
    /// Number of grid intervals over the common time window.
    #[arg(long)]
    n: usize,
    /// Difference raw prices instead of log-prices.
    #[arg(long)]
    raw: bool,
    /// Increments CSV; stdout when omitted. A manifest is written next to it.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    Input(String),
    Invalid(String),
    Output(String),
    Checks(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Invalid(m) | Failure::Output(m) | Failure::Checks(m) => {
                f.write_str(m)
            }
        }
    }
}

impl std::error::Error for Failure {}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

/// Tag a core error by whether it came from reading input or from the values themselves.
fn input<T>(r: cojump_core::Result<T>, what: &Path) -> anyhow::Result<T> {
    use cojump_core::Error as E;
    r.map_err(|e| {
        let msg = format!("{}: {e}", what.display());
        match e {
            E::Io(_) | E::Config(_) | E::Parse { .. } => Failure::Input(msg).into(),
            _ => Failure::Invalid(msg).into(),
        }
    })
}

fn output<T>(r: cojump_core::Result<T>, what: &Path) -> anyhow::Result<T> {
    r.map_err(|e| Failure::Output(format!("{}: {e}", what.display())).into())
}

fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Input(_) => (3, "input"),
                Failure::Invalid(_) => (4, "invalid"),
                Failure::Output(_) => (5, "output"),
                Failure::Checks(_) => (6, "checks"),
            };
        }
        if let Some(e) = cause.downcast_ref::<cojump_core::Error>() {
            use cojump_core::Error as E;
            return match e {
                E::Io(_) | E::Config(_) | E::Parse { .. } => (3, "input"),
                _ => (4, "invalid"),
            };
        }
    }
    (1, "internal")
}

fn report_error(code: u8, kind: &str, msg: &str) {
    let one_line = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error code={code} kind={kind} message={one_line:?}");
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    output(cio::write_atomic(path, text.as_bytes()), path)
}

fn write_stdout(text: &str) -> anyhow::Result<()> {
    std::io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Output(format!("stdout: {e}")).into())
}

fn write_manifest(manifest: cojump_core::Result<RunManifest>, path: &Path) -> anyhow::Result<()> {
    let m = manifest.map_err(|e| Failure::Invalid(e.to_string()))?;
    output(m.write(path), path)
}

fn path_names(paths: &[&Path]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn simulate_cmd(args: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg: RunConfig = input(cio::load_run_config(&args.config), &args.config)?;
    args.model.apply(&mut cfg.model)?;
    let n = args
        .n
        .or(cfg.simulation.n)
        .ok_or_else(|| invalid("grid size missing: pass --n or set simulation.n"))?;
    let seed = args.seed.or(cfg.simulation.seed).unwrap_or(0);
    let mut sim = SimConfig::new(n, seed);
    if let Some(c) = cfg.simulation.cutoff {
        sim.cutoff = c;
    }
    if let Some(eps0) = args.cutoff {
        sim.cutoff = CutoffPolicy::Explicit { eps0 };
    }
    // record the effective settings so the manifest alone reproduces the run
    cfg.simulation.n = Some(n);
    cfg.simulation.seed = Some(seed);
    cfg.simulation.cutoff = Some(sim.cutoff);

    let path = simulate_path(&cfg.model, &sim, 0)?;
    write_file(
        &args.output,
        &output(cio::paths_to_csv(&path), &args.output)?,
    )?;
    let mut outputs = vec![args.output.as_path()];
    if let Some(inc_path) = &args.increments {
        write_file(inc_path, &cio::increments_to_csv(&path.increments()?))?;
        outputs.push(inc_path);
    }
    let mpath = manifest_path(&args.output);
    write_manifest(
        RunManifest::new("simulate", &cfg, Some(seed), path_names(&outputs)),
        &mpath,
    )
}

#[derive(Serialize)]
struct EstimateSettings<'a> {
    input: String,
    threshold: Option<f64>,
    rule: ThresholdRule,
    truth: Option<f64>,
    deterministic: bool,
    format: &'a str,
}

#[derive(Serialize)]
struct IngestSettings {
    a: String,
    b: String,
    n: usize,
    scale: PriceScale,
}

fn estimate_cmd(args: EstimateArgs) -> anyhow::Result<()> {
    let from_config = match &args.config {
        Some(p) => input(cio::load_run_config(p), p)?.threshold,
        None => None,
    };
    let rule = args.threshold.rule(from_config)?;
    let (inc, path) = input(cio::read_increments_any(&args.input), &args.input)?;
    let trunc = match args.threshold.threshold {
        Some(level) if level > 0.0 => Truncation::shared(level),
        Some(level) => bail!(invalid(format!(
            "--threshold must be positive, got {level}"
        ))),
        None => Truncation::from_rule(&rule, inc.h()),
    };
    let truth = args.truth.or_else(|| {
        path.as_ref()
            .and_then(|p| p.truth)
            .map(|t| t.integrated_cov)
    });
    let opts = EstimatorOptions {
        deterministic: args.deterministic,
    };
    let report = estimate(&inc, trunc, truth, opts)?;
    let (text, fmt_name) = match args.format {
        ReportFormat::Json => (cio::estimator_report_json(&report)?, "json"),
        ReportFormat::Csv => (cio::estimator_report_csv(&report), "csv"),
    };
    match &args.output {
        None => write_stdout(&text),
        Some(out) => {
            write_file(out, &text)?;
            let settings = EstimateSettings {
                input: args.input.display().to_string(),
                threshold: args.threshold.threshold,
                rule,
                truth,
                deterministic: args.deterministic,
                format: fmt_name,
            };
            write_manifest(
                RunManifest::new("estimate", &settings, None, path_names(&[out])),
                &manifest_path(out),
            )
        }
    }
}

fn experiment_cmd(args: ExperimentArgs) -> anyhow::Result<()> {
    let mut plan = input(cio::load_plan(&args.plan), &args.plan)?;
    args.model.apply(&mut plan.model)?;
    if let Some(s) = args.seed {
        plan.seed = s;
    }
    if let Some(m) = args.replications {
        plan.replications = m;
    }
    plan.rule = ThresholdRule::new(
        args.coeff.unwrap_or(plan.rule.coeff),
        args.beta.unwrap_or(plan.rule.beta),
    )?;
    plan.validate()?;
    let report: ExperimentReport = experiments::run(&plan)?;
    let summary = report.summary();
    write_stdout(&summary)?;
    if let Some(stem) = &args.output {
        let files = [
            (with_ext(stem, "csv"), cio::experiment_report_csv(&report)),
            (
                with_ext(stem, "json"),
                cio::experiment_report_json(&report)?,
            ),
            (with_ext(stem, "txt"), summary.clone()),
        ];
        for (p, text) in &files {
            write_file(p, text)?;
        }
        let names: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
        write_manifest(
            RunManifest::new("experiment", &plan, Some(plan.seed), path_names(&names)),
            &with_ext(stem, "manifest.json"),
        )?;
    }
    if args.strict && !report.passed() {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        bail!(Failure::Checks(format!(
            "failed checks: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn ingest_cmd(args: IngestArgs) -> anyhow::Result<()> {
    let a = input(cio::load_ticks(&args.a), &args.a)?;
    let b = input(cio::load_ticks(&args.b), &args.b)?;
    let scale = if args.raw {
        PriceScale::Raw
    } else {
        PriceScale::Log
    };
    let inc = cio::ingest_and_align(&a, &b, args.n, scale).context("aligning tick series")?;
    let text = cio::increments_to_csv(&inc);
    match &args.output {
        None => write_stdout(&text),
        Some(out) => {
            write_file(out, &text)?;
            let settings = IngestSettings {
                a: args.a.display().to_string(),
                b: args.b.display().to_string(),
                n: args.n,
                scale,
            };
            write_manifest(
                RunManifest::new("ingest", &settings, None, path_names(&[out])),
                &manifest_path(out),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            report_error(2, "usage", first);
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            report_error(code, kind, &format!("{e:#}"));
            ExitCode::from(code)
        }
    }
}
