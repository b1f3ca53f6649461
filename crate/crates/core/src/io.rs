//! File formats: TOML configs, path and increment CSVs, report exports, tick-data
//! alignment and run manifests.
//!
//! Floats are written with 17 significant digits, so every export re-imports bit for bit.
//! All writes go to a temporary sibling first and are renamed into place.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimate::{EstimatorReport, IncrementPair};
use crate::experiments::{ExperimentPlan, ExperimentReport};
use crate::model::{ModelSpec, ThresholdRule};
use crate::simulate::{CutoffPolicy, Decomposition, Grid, GroundTruth, PathMeta, PathPair};

/// Full-precision decimal encoding.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        reason: format!("`{}`: {e}", s.trim()),
    })
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| {
        Error::invalid(
            "output path",
            format!("{} has no file name", path.display()),
        )
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------------------
// configs

/// `[simulation]` table of a run config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<CutoffPolicy>,
}

/// Config for `simulate` and `estimate`: a `[model]` table plus optional `[simulation]`
/// and `[threshold]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdRule>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::from)
}

fn from_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().replace('\n', " ")))
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = from_toml(text)?;
    cfg.model.validate()?;
    if let Some(rule) = &cfg.threshold {
        rule.validate()?;
    }
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read_text(path)?)
}

pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let plan: ExperimentPlan = from_toml(text)?;
    plan.validate()?;
    Ok(plan)
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    parse_plan(&read_text(path)?)
}

pub fn plan_to_toml(plan: &ExperimentPlan) -> Result<String> {
    toml::to_string(plan).map_err(|e| Error::Config(e.to_string()))
}

pub fn run_config_to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

/// SHA-256 of the canonical JSON form of `value`: object keys sorted, no whitespace.
/// Reordering fields in the source config leaves it unchanged.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is ordered by key, so this is canonical
    let v = serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))?;
    let text = serde_json::to_string(&v).map_err(|e| Error::Config(e.to_string()))?;
    Ok(hex(&Sha256::digest(text.as_bytes())))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------------------
// paths

/// Metadata carried on the first line of a paths CSV, after `# `.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathsHeader {
    horizon: f64,
    x0: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<GroundTruth>,
}

const PATH_COLUMNS: [&str; 3] = ["time", "x1", "x2"];
const DECOMPOSITION_COLUMNS: [&str; 6] = ["d1", "d2", "j1a", "j1b", "j2a", "j2b"];

/// Paths CSV: a `# {json}` metadata line, then `time,x1,x2` and, for simulated paths,
/// `d1,d2` (diffusion parts), `j1a,j1b` (finite-activity parts of components 1 and 2)
/// and `j2a,j2b` (compensated infinite-activity parts). One row per grid point `t_0..t_n`.
pub fn paths_to_csv(path: &PathPair) -> Result<String> {
    path.check_invariants()?;
    let header = PathsHeader {
        horizon: path.grid.horizon,
        x0: path.x0,
        spec_hash: path.meta.as_ref().map(|m| m.spec_hash.clone()),
        seed: path.meta.as_ref().map(|m| m.seed),
        cutoff: path.cutoff,
        truth: path.truth,
    };
    let mut out = String::with_capacity((path.grid.n + 2) * 220);
    out.push_str("# ");
    out.push_str(&serde_json::to_string(&header).map_err(|e| Error::Config(e.to_string()))?);
    out.push('\n');
    let mut cols: Vec<&str> = PATH_COLUMNS.to_vec();
    if path.decomposition.is_some() {
        cols.extend(DECOMPOSITION_COLUMNS);
    }
    out.push_str(&cols.join(","));
    out.push('\n');
    for j in 0..=path.grid.n {
        let mut row = vec![path.times[j], path.x1[j], path.x2[j]];
        if let Some(d) = &path.decomposition {
            row.extend([
                d.diffusion[0][j],
                d.diffusion[1][j],
                d.fa[0][j],
                d.fa[1][j],
                d.ia[0][j],
                d.ia[1][j],
            ]);
        }
        out.push_str(
            &row.iter()
                .map(|v| fmt_f64(*v))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
    }
    Ok(out)
}

pub fn write_paths_csv(path: &PathPair, file: &Path) -> Result<()> {
    write_atomic(file, paths_to_csv(path)?.as_bytes())
}

pub fn read_paths_csv(file: &Path) -> Result<PathPair> {
    parse_paths_csv(&read_text(file)?)
}

pub fn parse_paths_csv(text: &str) -> Result<PathPair> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty paths file".into(),
    })?;
    let json = first.strip_prefix('#').ok_or(Error::Parse {
        line: 1,
        reason: "missing `# {...}` metadata line".into(),
    })?;
    let header: PathsHeader = serde_json::from_str(json.trim()).map_err(|e| Error::Parse {
        line: 1,
        reason: format!("metadata: {e}"),
    })?;
    let (hline, cols) = lines.next().ok_or(Error::Parse {
        line: 2,
        reason: "missing column header".into(),
    })?;
    let cols: Vec<&str> = cols.split(',').map(str::trim).collect();
    let with_parts = if cols == PATH_COLUMNS {
        false
    } else if cols.len() == 9 && cols[..3] == PATH_COLUMNS && cols[3..] == DECOMPOSITION_COLUMNS {
        true
    } else {
        return Err(Error::Parse {
            line: hline + 1,
            reason: format!("unexpected columns `{}`", cols.join(",")),
        });
    };
    let width = cols.len();
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (i, l) in lines {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected {width} fields, got {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            table[c].push(parse_f64(f, i + 1)?);
        }
    }
    if table[0].len() < 3 {
        return Err(Error::Insufficient(
            "a paths file needs at least 3 rows".into(),
        ));
    }
    let n = table[0].len() - 1;
    let grid = Grid::new(n, header.horizon)?;
    let mut it = table.into_iter();
    let mut next = || it.next().expect("column count checked");
    let (times, x1, x2) = (next(), next(), next());
    let decomposition = with_parts.then(|| {
        let (d1, d2, j1a, j1b, j2a, j2b) = (next(), next(), next(), next(), next(), next());
        Decomposition {
            diffusion: [d1, d2],
            fa: [j1a, j1b],
            ia: [j2a, j2b],
        }
    });
    let meta = match (header.spec_hash, header.seed) {
        (Some(spec_hash), Some(seed)) => Some(PathMeta { spec_hash, seed }),
        _ => None,
    };
    let pair = PathPair {
        grid,
        times,
        x1,
        x2,
        x0: header.x0,
        decomposition,
        truth: header.truth,
        ledger: None,
        cutoff: header.cutoff,
        meta,
    };
    pair.check_invariants()?;
    Ok(pair)
}

// ---------------------------------------------------------------------------------------
// increments

/// Increments CSV: `h=<value>`, then `dx1,dx2`, then one row per interval.
pub fn increments_to_csv(inc: &IncrementPair) -> String {
    let mut out = String::with_capacity(inc.len() * 50 + 40);
    out.push_str(&format!("h={}\ndx1,dx2\n", fmt_f64(inc.h())));
    for (a, b) in inc.dx1().iter().zip(inc.dx2()) {
        out.push_str(&fmt_f64(*a));
        out.push(',');
        out.push_str(&fmt_f64(*b));
        out.push('\n');
    }
    out
}

pub fn write_increments_csv(inc: &IncrementPair, file: &Path) -> Result<()> {
    write_atomic(file, increments_to_csv(inc).as_bytes())
}

pub fn parse_increments_csv(text: &str) -> Result<IncrementPair> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (i, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty increments file".into(),
    })?;
    let h = first
        .trim()
        .strip_prefix("h=")
        .ok_or(Error::Parse {
            line: i + 1,
            reason: "expected `h=<value>`".into(),
        })
        .and_then(|v| parse_f64(v, i + 1))?;
    match lines.next() {
        Some((_, l)) if l.trim() == "dx1,dx2" => {}
        Some((i, l)) => {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected `dx1,dx2`, got `{l}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: i + 2,
                reason: "missing column header".into(),
            })
        }
    }
    let mut dx1 = Vec::new();
    let mut dx2 = Vec::new();
    for (i, l) in lines {
        let (a, b) = l.split_once(',').ok_or(Error::Parse {
            line: i + 1,
            reason: "expected two fields".into(),
        })?;
        dx1.push(parse_f64(a, i + 1)?);
        dx2.push(parse_f64(b, i + 1)?);
    }
    IncrementPair::new(h, dx1, dx2)
}

pub fn read_increments_csv(file: &Path) -> Result<IncrementPair> {
    parse_increments_csv(&read_text(file)?)
}

/// Increments from either an increments CSV or a paths CSV, by sniffing the first line.
pub fn read_increments_any(file: &Path) -> Result<(IncrementPair, Option<PathPair>)> {
    let text = read_text(file)?;
    if text.trim_start().starts_with('#') {
        let p = parse_paths_csv(&text)?;
        Ok((p.increments()?, Some(p)))
    } else {
        Ok((parse_increments_csv(&text)?, None))
    }
}

// ---------------------------------------------------------------------------------------
// reports

pub fn estimator_report_json(report: &EstimatorReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Long-format CSV `name,index,value`; scalar fields have an empty index and detected
/// co-jump intervals are listed as `cojump_interval,<j>,<product>`.
pub fn estimator_report_csv(r: &EstimatorReport) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::from("name,index,value\n");
    let scalars = [
        ("n", r.n.to_string()),
        ("h", fmt_f64(r.h)),
        ("threshold1", fmt_f64(r.threshold_used.first)),
        ("threshold2", fmt_f64(r.threshold_used.second)),
        ("realized_cov", fmt_f64(r.realized_cov)),
        ("v11", fmt_f64(r.v11)),
        ("v22", fmt_f64(r.v22)),
        ("w", fmt_f64(r.w)),
        ("cojump_sum", fmt_f64(r.cojump_sum)),
        ("truth", opt(r.truth)),
        ("nb", opt(r.nb)),
        ("nb_degenerate", r.nb_degenerate.to_string()),
    ];
    for (k, v) in scalars {
        out.push_str(&format!("{k},,{v}\n"));
    }
    for c in &r.cojump_intervals {
        out.push_str(&format!(
            "cojump_interval,{},{}\n",
            c.index,
            fmt_f64(c.product)
        ));
    }
    out
}

/// Per-rung table `n,h,threshold,<metrics...>`, columns taken from the first row.
pub fn experiment_report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("n,h,threshold");
    if let Some(first) = report.rows.first() {
        for (k, _) in &first.values {
            out.push(',');
            out.push_str(k);
        }
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{}",
            row.n,
            fmt_f64(row.h),
            fmt_f64(row.threshold)
        ));
        for (_, v) in &row.values {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn experiment_report_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------------------------------
// tick data

/// Irregular price observations of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    timestamps: Vec<f64>,
    prices: Vec<f64>,
}

impl TickSeries {
    pub fn new(timestamps: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::LengthMismatch {
                left: timestamps.len(),
                right: prices.len(),
            });
        }
        if timestamps.len() < 2 {
            return Err(Error::Insufficient(
                "a tick series needs at least 2 observations".into(),
            ));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("tick series", "non-finite timestamp"));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(
                "tick series",
                "timestamps must be non-decreasing",
            ));
        }
        if let Some((i, p)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p > 0.0 && p.is_finite()))
        {
            return Err(Error::domain(format!(
                "non-positive price {p} at observation {}",
                i + 1
            )));
        }
        Ok(TickSeries { timestamps, prices })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn end(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1]
    }

    /// Last observation at or before `t` (ties resolve to the latest tick).
    pub fn previous_tick(&self, t: f64) -> Option<f64> {
        let k = self.timestamps.partition_point(|&s| s <= t);
        (k > 0).then(|| self.prices[k - 1])
    }
}

/// Reads `time,price` rows (header required).
pub fn read_ticks_csv<R: Read>(reader: R) -> Result<TickSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut t = Vec::new();
    let mut p = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                reason: format!("expected `time,price`, got {} fields", rec.len()),
            });
        }
        t.push(parse_f64(&rec[0], line)?);
        p.push(parse_f64(&rec[1], line)?);
    }
    TickSeries::new(t, p)
}

pub fn load_ticks(file: &Path) -> Result<TickSeries> {
    read_ticks_csv(BufReader::new(fs::File::open(file)?))
}

/// Whether aligned prices are log-transformed before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceScale {
    #[default]
    Log,
    Raw,
}

/// Previous-tick sampling of both series on `t_k = start + k (end - start)/n`, `k = 0..n`,
/// over the overlap `[start, end]` of their observation windows, then differencing.
///
/// Sampling never looks past the last tick at or before each grid time, so jumps stay
/// sharp instead of being smeared over neighbouring intervals.
pub fn ingest_and_align(
    a: &TickSeries,
    b: &TickSeries,
    n: usize,
    scale: PriceScale,
) -> Result<IncrementPair> {
    if n < 2 {
        return Err(Error::invalid("grid", format!("need n >= 2, got {n}")));
    }
    let start = a.start().max(b.start());
    let end = a.end().min(b.end());
    if !(end > start) {
        return Err(Error::Insufficient(format!(
            "empty time overlap: [{}, {}] and [{}, {}]",
            a.start(),
            a.end(),
            b.start(),
            b.end()
        )));
    }
    let h = (end - start) / n as f64;
    let grid_time = |k: usize| if k == n { end } else { start + k as f64 * h };
    let f = |p: f64| match scale {
        PriceScale::Log => p.ln(),
        PriceScale::Raw => p,
    };
    let sample = |s: &TickSeries| -> Vec<f64> {
        (0..=n)
            .map(|k| {
                f(s.previous_tick(grid_time(k))
                    .expect("grid starts inside the overlap"))
            })
            .collect()
    };
    IncrementPair::from_levels(h, &sample(a), &sample(b))
}

// ---------------------------------------------------------------------------------------
// manifests

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Canonical hash of the effective configuration.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(
        command: &str,
        config: &T,
        seed: Option<u64>,
        outputs: Vec<String>,
    ) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(RunManifest {
            command: command.to_string(),
            config_hash: canonical_hash(&config)?,
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs,
        })
    }

    pub fn write(&self, file: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
        write_atomic(file, s.as_bytes())
    }

    pub fn read(file: &Path) -> Result<Self> {
        serde_json::from_reader(BufReader::new(fs::File::open(file)?)).map_err(|e| Error::Parse {
            line: e.line(),
            reason: e.to_string(),
        })
    }
}
