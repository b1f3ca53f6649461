//! Monte-Carlo harness: replicate simulated paths along a ladder of step counts and
//! summarize the threshold statistics against their known limits.
//!
//! Every replication owns its RNG stream, derived from the plan seed, the rung index and
//! the replication index, so reports are reproducible regardless of how rayon schedules
//! the work. Every mean is reported with its Monte-Carlo standard error, and every
//! pass/fail decision compares against a band of standard errors or a stated tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{self, Truncation};
use crate::model::{InfiniteActivityJumpSpec, ModelSpec, ThresholdRule};
use crate::simulate::{
    binned_increments, path_rng, resolve_cutoff, simulate_ia_jumps, simulate_path, CutoffPolicy,
    Grid, Jump, SimConfig,
};
use crate::stats::{
    self, fit_log_log, ks_critical_95, ks_distance_normal, RunningMoments, SlopeFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    Normality,
    StderrLimit,
    CojumpRates,
    SmallJumpVariance,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Normality => "normality",
            ExperimentKind::StderrLimit => "stderr_limit",
            ExperimentKind::CojumpRates => "cojump_rates",
            ExperimentKind::SmallJumpVariance => "small_jump_variance",
        }
    }
}

/// Acceptance bands. Unset values fall back to the defaults of each experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    /// Width, in Monte-Carlo standard errors, of mean comparisons.
    #[serde(default = "default_sigma_band")]
    pub sigma_band: f64,
    /// Absolute tolerance on fitted log-log slopes.
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
    /// Largest tolerated fraction of degenerate normalized-bias denominators.
    #[serde(default = "default_degenerate_max")]
    pub degenerate_max: f64,
    /// KS distance bound; defaults to the asymptotic 5% critical value `1.36/√M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_max: Option<f64>,
    /// Bound on the median `|ṽ₁,₁ - truth| / |truth|` at the finest rung.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_error_max: Option<f64>,
}

fn default_sigma_band() -> f64 {
    3.0
}

fn default_slope_tolerance() -> f64 {
    0.15
}

fn default_degenerate_max() -> f64 {
    0.05
}

impl Default for Bands {
    fn default() -> Self {
        Bands {
            sigma_band: default_sigma_band(),
            slope_tolerance: default_slope_tolerance(),
            degenerate_max: default_degenerate_max(),
            ks_max: None,
            relative_error_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    pub rule: ThresholdRule,
    pub n_ladder: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cutoff: CutoffPolicy,
    #[serde(default)]
    pub bands: Bands,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.rule.validate()?;
        if self.replications < 2 {
            return Err(Error::invalid("plan", "need at least 2 replications"));
        }
        if self.n_ladder.is_empty() {
            return Err(Error::invalid("plan", "empty n ladder"));
        }
        if self.n_ladder[0] < 2 {
            return Err(Error::invalid("plan", "every rung needs n >= 2"));
        }
        if self.n_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "plan",
                "n ladder must be strictly increasing",
            ));
        }
        Ok(())
    }

    fn sim_config(&self, n: usize) -> SimConfig {
        SimConfig {
            n,
            seed: self.seed,
            cutoff: self.cutoff,
            max_residual_fraction: None,
        }
    }

    fn h(&self, n: usize) -> f64 {
        self.model.horizon / n as f64
    }
}

/// Stream index of replication `m` on rung `rung`.
fn stream(rung: usize, m: usize) -> u64 {
    ((rung as u64) << 32) | m as u64
}

/// One row of the per-rung table: named values in a fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungRow {
    pub n: usize,
    pub h: f64,
    pub threshold: f64,
    pub values: Vec<(String, f64)>,
}

impl RungRow {
    fn new(n: usize, h: f64, threshold: f64) -> Self {
        RungRow {
            n,
            h,
            threshold,
            values: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, v: f64) {
        self.values.push((name.to_string(), v));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: SlopeFit,
    /// Theoretical slope, when there is one.
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub replications: usize,
    /// Outside the scope of the theorem the experiment illustrates; checks are informative only.
    pub exploratory: bool,
    pub rows: Vec<RungRow>,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<Check>,
    pub degenerate: usize,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind, replications: usize) -> Self {
        ExperimentReport {
            kind,
            replications,
            exploratory: false,
            rows: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            degenerate: 0,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&NamedFit> {
        self.fits.iter().find(|f| f.name == name)
    }

    /// Plain-text summary with one PASS/FAIL line per check.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "experiment: {}{}\nreplications: {}\n",
            self.kind.name(),
            if self.exploratory {
                " (exploratory)"
            } else {
                ""
            },
            self.replications
        );
        for f in &self.fits {
            s.push_str(&format!(
                "fit {}: slope {:.4} ± {:.4} (r² {:.4}, max residual {:.3e})",
                f.name, f.fit.slope, f.fit.half_width, f.fit.r_squared, f.fit.max_abs_residual
            ));
            if let Some(e) = f.expected {
                s.push_str(&format!(", expected {e:.4}"));
            }
            s.push('\n');
        }
        if self.degenerate > 0 {
            s.push_str(&format!("degenerate denominators: {}\n", self.degenerate));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        for c in &self.checks {
            s.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        s
    }
}

pub fn run(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    match plan.kind {
        ExperimentKind::Consistency => run_consistency(plan),
        ExperimentKind::Normality => run_normality(plan),
        ExperimentKind::StderrLimit => run_stderr_limit(plan),
        ExperimentKind::CojumpRates => run_cojump_rates(plan),
        ExperimentKind::SmallJumpVariance => run_small_jump_variance(plan),
    }
}

fn expect_kind(plan: &ExperimentPlan, kind: ExperimentKind) -> Result<()> {
    plan.validate()?;
    if plan.kind != kind {
        return Err(Error::invalid(
            "plan",
            format!("expected a {} plan, got {}", kind.name(), plan.kind.name()),
        ));
    }
    Ok(())
}

/// Per-path threshold statistics and ground truth.
struct PathStats {
    v11: f64,
    v22: f64,
    w: f64,
    truth: crate::simulate::GroundTruth,
}

fn path_stats(plan: &ExperimentPlan, rung: usize, n: usize) -> Result<Vec<PathStats>> {
    let cfg = plan.sim_config(n);
    let trunc = Truncation::from_rule(&plan.rule, plan.h(n));
    (0..plan.replications)
        .into_par_iter()
        .map(|m| {
            let path = simulate_path(&plan.model, &cfg, stream(rung, m)).map_err(|e| {
                Error::invalid("simulation", format!("rung n = {n}, replication {m}: {e}"))
            })?;
            let inc = path.increments()?;
            Ok(PathStats {
                v11: estimate::threshold_stat_at(&inc, 1, 1, trunc),
                v22: estimate::threshold_stat_at(&inc, 2, 2, trunc),
                w: estimate::adjacent_stat_at(&inc, trunc)?,
                truth: path.truth.expect("simulated paths carry truth"),
            })
        })
        .collect()
}

fn moments_of(xs: &[f64]) -> RunningMoments {
    let mut m = RunningMoments::new();
    xs.iter().for_each(|&x| m.push(x));
    m
}

fn model_has_jumps(model: &ModelSpec) -> bool {
    model.fa1.is_some() || model.fa2.is_some() || model.common_fa.is_some() || model.has_ia()
}

/// Distribution of `ṽ₁,₁ - ∫ρσσ` along the ladder.
pub fn run_consistency(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    expect_kind(plan, ExperimentKind::Consistency)?;
    let mut report = ExperimentReport::new(plan.kind, plan.replications);
    let mut medians = Vec::new();
    let mut last_rel = f64::NAN;
    let mut jump_free_centered = true;
    let mut centered_detail = String::new();
    for (rung, &n) in plan.n_ladder.iter().enumerate() {
        let stats = path_stats(plan, rung, n)?;
        let errors: Vec<f64> = stats
            .iter()
            .map(|s| s.v11 - s.truth.integrated_cov)
            .collect();
        let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        let rel: Vec<f64> = stats
            .iter()
            .zip(&abs)
            .map(|(s, a)| a / s.truth.integrated_cov.abs())
            .collect();
        let truths: Vec<f64> = stats.iter().map(|s| s.truth.integrated_cov).collect();
        let m = moments_of(&errors);
        let h = plan.h(n);
        let mut row = RungRow::new(n, h, plan.rule.level(h));
        row.push("mean_truth", moments_of(&truths).mean());
        row.push("mean_error", m.mean());
        row.push("se_mean_error", m.std_error_of_mean());
        row.push("q05_error", stats::quantile(&errors, 0.05));
        row.push("q25_error", stats::quantile(&errors, 0.25));
        row.push("median_error", stats::median(&errors));
        row.push("q75_error", stats::quantile(&errors, 0.75));
        row.push("q95_error", stats::quantile(&errors, 0.95));
        let med_abs = stats::median(&abs);
        row.push("median_abs_error", med_abs);
        last_rel = stats::median(&rel);
        row.push("median_rel_abs_error", last_rel);
        medians.push((h, med_abs));
        if !(m.mean().abs() <= 4.0 * m.std_error_of_mean()) {
            jump_free_centered = false;
            centered_detail = format!(
                "n = {n}: mean error {:.3e} ± {:.3e}",
                m.mean(),
                m.std_error_of_mean()
            );
        }
        report.rows.push(row);
    }
    let decreasing = medians.windows(2).all(|w| w[1].1 < w[0].1);
    report.checks.push(Check::new(
        "median_abs_error_decreasing",
        decreasing,
        medians
            .iter()
            .map(|(h, m)| format!("h={h:.3e}: {m:.4e}"))
            .collect::<Vec<_>>()
            .join(", "),
    ));
    if let Some(bound) = plan.bands.relative_error_max {
        report.checks.push(Check::new(
            "finest_rung_relative_error",
            last_rel < bound,
            format!("median relative |error| {last_rel:.4e} vs bound {bound}"),
        ));
    }
    if !model_has_jumps(&plan.model) {
        report.checks.push(Check::new(
            "errors_centered_jump_free",
            jump_free_centered,
            if jump_free_centered {
                "mean error within 4 standard errors of 0 on every rung".to_string()
            } else {
                centered_detail
            },
        ));
    }
    if medians.len() >= 3 {
        let (hs, ms): (Vec<f64>, Vec<f64>) = medians.iter().copied().unzip();
        if let Ok(fit) = fit_log_log(&hs, &ms) {
            report.fits.push(NamedFit {
                name: "median_abs_error_vs_h".into(),
                fit,
                expected: None,
            });
        }
    }
    Ok(report)
}

/// Samples of the normalized bias and their KS distance to `N(0, 1)`.
pub fn run_normality(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    expect_kind(plan, ExperimentKind::Normality)?;
    let mut report = ExperimentReport::new(plan.kind, plan.replications);
    if plan.model.has_ia() {
        report.exploratory = true;
        report.notes.push(
            "infinite-activity jumps present: the limit law is only established without them"
                .into(),
        );
    }
    for (rung, &n) in plan.n_ladder.iter().enumerate() {
        let h = plan.h(n);
        let stats = path_stats(plan, rung, n)?;
        let mut nb = Vec::with_capacity(stats.len());
        let mut degenerate = 0;
        for s in &stats {
            match estimate::normalized_bias_from(s.v11, s.v22, s.w, h, s.truth.integrated_cov) {
                Ok(v) => nb.push(v),
                Err(Error::Degenerate(_)) => degenerate += 1,
                Err(e) => return Err(e),
            }
        }
        report.degenerate += degenerate;
        let rate = degenerate as f64 / stats.len() as f64;
        let ks = ks_distance_normal(&nb);
        let band = plan
            .bands
            .ks_max
            .unwrap_or_else(|| ks_critical_95(nb.len()));
        let mut row = RungRow::new(n, h, plan.rule.level(h));
        let m = moments_of(&nb);
        row.push("samples", nb.len() as f64);
        row.push("degenerate_rate", rate);
        row.push("mean_nb", m.mean());
        row.push("sd_nb", m.variance().sqrt());
        row.push("ks_distance", ks);
        row.push("ks_band", band);
        report.rows.push(row);
        report.checks.push(Check::new(
            format!("degenerate_rate_n{n}"),
            rate <= plan.bands.degenerate_max,
            format!("{degenerate} of {} ({rate:.4})", stats.len()),
        ));
        report.checks.push(Check::new(
            format!("ks_n{n}"),
            ks < band,
            format!(
                "KS distance {ks:.4} vs band {band:.4} over {} samples",
                nb.len()
            ),
        ));
    }
    Ok(report)
}

/// Monte-Carlo means of `ṽ₂,₂`, `w̃` and `ṽ₂,₂ - w̃` against their limits.
pub fn run_stderr_limit(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    expect_kind(plan, ExperimentKind::StderrLimit)?;
    let mut report = ExperimentReport::new(plan.kind, plan.replications);
    let k = plan.bands.sigma_band;
    let last = plan.n_ladder.len() - 1;
    for (rung, &n) in plan.n_ladder.iter().enumerate() {
        let h = plan.h(n);
        let stats = path_stats(plan, rung, n)?;
        let mut row = RungRow::new(n, h, plan.rule.level(h));
        let series: [(&str, Vec<f64>, Vec<f64>); 3] = [
            (
                "v22",
                stats.iter().map(|s| s.v22).collect(),
                stats.iter().map(|s| s.truth.v22_limit()).collect(),
            ),
            (
                "w",
                stats.iter().map(|s| s.w).collect(),
                stats.iter().map(|s| s.truth.w_limit()).collect(),
            ),
            (
                "v22_minus_w",
                stats.iter().map(|s| s.v22 - s.w).collect(),
                stats.iter().map(|s| s.truth.stderr_limit()).collect(),
            ),
        ];
        for (name, values, targets) in &series {
            let vm = moments_of(values);
            let diff: Vec<f64> = values.iter().zip(targets).map(|(v, t)| v - t).collect();
            let dm = moments_of(&diff);
            let target = moments_of(targets).mean();
            row.push(&format!("mean_{name}"), vm.mean());
            row.push(&format!("se_{name}"), vm.std_error_of_mean());
            row.push(&format!("target_{name}"), target);
            row.push(&format!("bias_{name}"), dm.mean());
            row.push(&format!("se_bias_{name}"), dm.std_error_of_mean());
            if rung == last {
                // deterministic targets make dm.se equal vm.se; random ones are paired per path
                let se = dm.std_error_of_mean();
                report.checks.push(Check::new(
                    format!("{name}_limit"),
                    dm.mean().abs() <= k * se,
                    format!(
                        "n = {n}: mean {:.5} vs target {target:.5}, bias {:.3e} = {:.2} standard errors (band {k})",
                        vm.mean(),
                        dm.mean(),
                        dm.mean() / se
                    ),
                ));
            }
        }
        report.rows.push(row);
    }
    Ok(report)
}

/// Slope of `E[H']` in `h` for `r_h = h^β` under complete dependence: the smaller of
/// `1 + β(α₁+α₂-α₁α₂)/(2α₁)` and the compensator term `2 + Σ_q min(0, β(1-α_q)/2)`.
pub fn coincrement_mean_exponent(alpha1: f64, alpha2: f64, beta: f64) -> f64 {
    let first = 1.0 + beta * (alpha1 + alpha2 - alpha1 * alpha2) / (2.0 * alpha1);
    let second = 2.0
        + [alpha1, alpha2]
            .iter()
            .map(|a| (beta * (1.0 - a) / 2.0).min(0.0))
            .sum::<f64>();
    first.min(second)
}

/// Slope of `Var(H')` in `h`: the smaller of `2 + β(4-α₁-α₂)/2` and
/// `1 + β(2α₁+2α₂-α₁α₂)/(2α₁)`.
pub fn coincrement_var_exponent(alpha1: f64, alpha2: f64, beta: f64) -> f64 {
    let first = 2.0 + beta / 2.0 * (4.0 - alpha1 - alpha2);
    let second = 1.0 + beta * (2.0 * alpha1 + 2.0 * alpha2 - alpha1 * alpha2) / (2.0 * alpha1);
    first.min(second)
}

/// Pooled moments of the thresholded co-increments `H'_{nj}` on one rung.
#[derive(Debug, Clone)]
pub struct CoincrementRung {
    pub n: usize,
    pub h: f64,
    /// `4 r_h`: squared-increment level for the infinite-activity parts.
    pub level: f64,
    /// `H'` pooled over intervals and replications.
    pub h_prime: RunningMoments,
    /// Truncated increments `ΔJ̃⁽q⁾ 1{(ΔJ̃⁽q⁾)² <= 4 r_h}` per component.
    pub truncated: [RunningMoments; 2],
    /// `(Σ_j H'_{nj} - n Ê[H']) / √(n V̂ar(H'))` per replication, with plug-in moments.
    pub normalized_sums: Vec<f64>,
}

impl CoincrementRung {
    pub fn ks_distance(&self) -> f64 {
        ks_distance_normal(&self.normalized_sums)
    }
}

fn ia_pair(model: &ModelSpec) -> Result<(&InfiniteActivityJumpSpec, &InfiniteActivityJumpSpec)> {
    match (&model.ia1, &model.ia2) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::invalid(
            "plan",
            "co-increment experiments need infinite-activity jumps in both components",
        )),
    }
}

fn check_cutoff_below(eps0: f64, band_edge: f64, n: usize) -> Result<()> {
    if eps0 > band_edge {
        return Err(Error::invalid(
            "cutoff",
            format!("cutoff {eps0} lies above 2√r_h = {band_edge} at n = {n}"),
        ));
    }
    Ok(())
}

/// Simulate the compensated infinite-activity parts on one rung and collect `H'`.
pub fn coincrement_rung(
    model: &ModelSpec,
    rule: &ThresholdRule,
    cutoff: CutoffPolicy,
    n: usize,
    replications: usize,
    seed: u64,
    rung: usize,
) -> Result<CoincrementRung> {
    model.validate()?;
    rule.validate()?;
    if replications < 2 {
        return Err(Error::invalid("plan", "need at least 2 replications"));
    }
    let (s1, s2) = ia_pair(model)?;
    let cfg = SimConfig {
        n,
        seed,
        cutoff,
        max_residual_fraction: None,
    };
    let eps0 = resolve_cutoff(model, &cfg)?.expect("model has infinite-activity jumps");
    let grid = Grid::new(n, model.horizon)?;
    let h = grid.h();
    let level = 4.0 * rule.level(h);
    check_cutoff_below(eps0, level.sqrt(), n)?;

    struct PathOut {
        hp: RunningMoments,
        tr: [RunningMoments; 2],
        sum: f64,
    }
    let outs: Vec<PathOut> = (0..replications)
        .into_par_iter()
        .map(|m| {
            let mut rng = path_rng(seed, stream(rung, m));
            let sim = simulate_ia_jumps(Some(s1), Some(s2), &model.copula, eps0, &grid, &mut rng)?;
            let keep = |x: f64| if x * x <= level { x } else { 0.0 };
            let mut out = PathOut {
                hp: RunningMoments::new(),
                tr: [RunningMoments::new(), RunningMoments::new()],
                sum: 0.0,
            };
            let mut sum = crate::sum::NeumaierSum::new();
            for (a, b) in sim.increments[0].iter().zip(&sim.increments[1]) {
                let (ka, kb) = (keep(*a), keep(*b));
                let hp = ka * kb;
                out.hp.push(hp);
                out.tr[0].push(ka);
                out.tr[1].push(kb);
                sum.add(hp);
            }
            out.sum = sum.value();
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut h_prime = RunningMoments::new();
    let mut truncated = [RunningMoments::new(), RunningMoments::new()];
    for o in &outs {
        h_prime = h_prime.merge(&o.hp);
        truncated[0] = truncated[0].merge(&o.tr[0]);
        truncated[1] = truncated[1].merge(&o.tr[1]);
    }
    let nf = n as f64;
    let (mean, var) = (h_prime.mean(), h_prime.variance());
    let scale = (nf * var).sqrt();
    let normalized_sums = outs.iter().map(|o| (o.sum - nf * mean) / scale).collect();
    Ok(CoincrementRung {
        n,
        h,
        level,
        h_prime,
        truncated,
        normalized_sums,
    })
}

/// Log-log rates of `E[H']` and `Var(H')` along the ladder.
pub fn run_cojump_rates(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    expect_kind(plan, ExperimentKind::CojumpRates)?;
    if plan.n_ladder.len() < 4 {
        return Err(Error::Insufficient(format!(
            "rate regression needs at least 4 rungs, got {}",
            plan.n_ladder.len()
        )));
    }
    let (s1, s2) = ia_pair(&plan.model)?;
    let mut report = ExperimentReport::new(plan.kind, plan.replications);
    let gamma = plan.model.copula.gamma;
    let in_scope = gamma == 0.0 && s1.negative.is_none() && s2.negative.is_none();
    if !in_scope {
        report.exploratory = true;
        report.notes.push(format!(
            "gamma = {gamma}{}: rate exponents are only established for complete dependence and positive jumps",
            if s1.negative.is_some() || s2.negative.is_some() { " with negative branches" } else { "" }
        ));
    }
    let k = plan.bands.sigma_band.max(4.0);
    let mut hs = Vec::new();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    let mut last_ks = (0, f64::NAN, 0);
    let mut independence_ok = true;
    let mut independence_detail = Vec::new();
    for (rung, &n) in plan.n_ladder.iter().enumerate() {
        let r = coincrement_rung(
            &plan.model,
            &plan.rule,
            plan.cutoff,
            n,
            plan.replications,
            plan.seed,
            rung,
        )?;
        let mut row = RungRow::new(n, r.h, plan.rule.level(r.h));
        let (m1, m2) = (r.truncated[0].mean(), r.truncated[1].mean());
        row.push("mean_h_prime", r.h_prime.mean());
        row.push("se_mean_h_prime", r.h_prime.std_error_of_mean());
        row.push("var_h_prime", r.h_prime.variance());
        row.push("se_var_h_prime", r.h_prime.std_error_of_variance());
        row.push("mean_truncated_1", m1);
        row.push("mean_truncated_2", m2);
        row.push("ks_normalized_sum", r.ks_distance());
        report.rows.push(row);
        hs.push(r.h);
        means.push(r.h_prime.mean());
        vars.push(r.h_prime.variance());
        last_ks = (n, r.ks_distance(), r.normalized_sums.len());
        if gamma == 1.0 {
            // independent components: E[H'] = E[ΔJ̃¹ 1{..}] E[ΔJ̃² 1{..}]
            let se = (r.h_prime.std_error_of_mean().powi(2)
                + (m2 * r.truncated[0].std_error_of_mean()).powi(2)
                + (m1 * r.truncated[1].std_error_of_mean()).powi(2))
            .sqrt();
            let diff = r.h_prime.mean() - m1 * m2;
            if diff.abs() > k * se {
                independence_ok = false;
            }
            independence_detail.push(format!("n={n}: {:.2} se", diff / se));
        }
    }
    let (a1, a2, beta) = (s1.alpha, s2.alpha, plan.rule.beta);
    let specs = [
        (
            "mean_h_prime_vs_h",
            &means,
            coincrement_mean_exponent(a1, a2, beta),
        ),
        (
            "var_h_prime_vs_h",
            &vars,
            coincrement_var_exponent(a1, a2, beta),
        ),
    ];
    for (name, ys, expected) in specs {
        if ys.iter().all(|v| *v > 0.0) {
            let fit = fit_log_log(&hs, ys)?;
            if in_scope {
                report.checks.push(Check::new(
                    format!("{name}_slope"),
                    (fit.slope - expected).abs() <= plan.bands.slope_tolerance,
                    format!(
                        "slope {:.4} ± {:.4} vs expected {expected:.4} (tolerance {})",
                        fit.slope, fit.half_width, plan.bands.slope_tolerance
                    ),
                ));
            }
            report.fits.push(NamedFit {
                name: name.into(),
                fit,
                expected: in_scope.then_some(expected),
            });
        } else {
            report
                .notes
                .push(format!("{name}: non-positive moment on some rung, no fit"));
        }
    }
    if in_scope {
        let (n, ks, m) = last_ks;
        let band = plan.bands.ks_max.unwrap_or_else(|| ks_critical_95(m));
        report.checks.push(Check::new(
            format!("normalized_sum_ks_n{n}"),
            ks < band,
            format!(
                "KS distance {ks:.4} vs band {band:.4} over {m} replications (plug-in moments)"
            ),
        ));
    }
    if gamma == 1.0 {
        report.checks.push(Check::new(
            "independence_product_of_means",
            independence_ok,
            independence_detail.join(", "),
        ));
    }
    Ok(report)
}

/// Per-step variance of the compensated jumps of component 1 with sizes in `(ε₀, 2√r_h]`.
pub fn run_small_jump_variance(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    expect_kind(plan, ExperimentKind::SmallJumpVariance)?;
    let spec = plan
        .model
        .ia1
        .ok_or_else(|| Error::invalid("plan", "small-jump experiment needs ia1"))?;
    let mut report = ExperimentReport::new(plan.kind, plan.replications);
    let k = plan.bands.sigma_band.max(4.0);
    for (rung, &n) in plan.n_ladder.iter().enumerate() {
        let cfg = plan.sim_config(n);
        let eps0 = resolve_cutoff(&plan.model, &cfg)?.expect("model has ia1");
        let grid = Grid::new(n, plan.model.horizon)?;
        let h = grid.h();
        let r_h = plan.rule.level(h);
        let edge = 2.0 * r_h.sqrt();
        check_cutoff_below(eps0, edge, n)?;
        let edge = edge.min(1.0);
        let branches: Vec<(crate::model::StableLikeTail, f64)> =
            std::iter::once((spec.positive(), 1.0))
                .chain(spec.negative.map(|t| (t, -1.0)))
                .collect();
        let compensator: f64 = branches
            .iter()
            .map(|(t, sign)| sign * h * t.moment_band(1.0, eps0, edge))
            .sum();
        let target: f64 = branches
            .iter()
            .map(|(t, _)| h * t.moment_band(2.0, eps0, edge))
            .sum();
        let per_path: Vec<RunningMoments> = (0..plan.replications)
            .into_par_iter()
            .map(|m| {
                let mut rng = path_rng(plan.seed, stream(rung, m));
                let ledger = crate::simulate::simulate_ledger(&plan.model, Some(eps0), &mut rng)?;
                let small = ledger.ia_jumps(0).filter(|j: &Jump| j.size.abs() <= edge);
                let inc = binned_increments(&grid, small, compensator);
                Ok(moments_of(&inc))
            })
            .collect::<Result<_>>()?;
        let pooled = per_path
            .iter()
            .fold(RunningMoments::new(), |acc, m| acc.merge(m));
        let var = pooled.variance();
        let se = pooled.std_error_of_variance();
        let mut row = RungRow::new(n, h, r_h);
        row.push("cutoff", eps0);
        row.push("band_edge", edge);
        row.push("variance", var);
        row.push("se_variance", se);
        row.push("target", target);
        row.push("mean", pooled.mean());
        report.rows.push(row);
        let diff = var - target;
        report.checks.push(Check::new(
            format!("small_jump_variance_n{n}"),
            diff.abs() <= k * se,
            format!(
                "variance {var:.5e} vs h(η²(2√r_h) - η²(ε₀)) = {target:.5e}: {:.2} standard errors (band {k})",
                if se > 0.0 { diff / se } else { 0.0 }
            ),
        ));
    }
    Ok(report)
}

/// Rate of common infinite-activity jumps with `x > a` and `y > b`, per unit time.
pub fn joint_excess_rate(
    model: &ModelSpec,
    eps0: f64,
    a: f64,
    b: f64,
    replications: usize,
    seed: u64,
) -> Result<RunningMoments> {
    let (s1, s2) = ia_pair(model)?;
    let counts: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|m| {
            let mut rng = path_rng(seed, m as u64);
            let ia = crate::simulate::simulate_ia_ledger(
                Some(s1),
                Some(s2),
                &model.copula,
                eps0,
                model.horizon,
                &mut rng,
            )?;
            let c = ia.common.iter().filter(|c| c.x > a && c.y > b).count();
            Ok(c as f64 / model.horizon)
        })
        .collect::<Result<_>>()?;
    Ok(moments_of(&counts))
}

/// Rate of component-`q` infinite-activity jumps above `a`, all copula parts included.
pub fn marginal_excess_rate(
    model: &ModelSpec,
    eps0: f64,
    q: usize,
    a: f64,
    replications: usize,
    seed: u64,
) -> Result<RunningMoments> {
    let (s1, s2) = ia_pair(model)?;
    let counts: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|m| {
            let mut rng = path_rng(seed, m as u64);
            let ia = crate::simulate::simulate_ia_ledger(
                Some(s1),
                Some(s2),
                &model.copula,
                eps0,
                model.horizon,
                &mut rng,
            )?;
            let ledger = crate::simulate::JumpLedger {
                ia: ia.only,
                common_ia: ia.common,
                ..Default::default()
            };
            let c = ledger.ia_jumps(q).filter(|j| j.size > a).count();
            Ok(c as f64 / model.horizon)
        })
        .collect::<Result<_>>()?;
    Ok(moments_of(&counts))
}
