//! Exact-decomposition path simulation on an equally spaced grid.
//!
//! Jumps are drawn in continuous time first (the [`JumpLedger`]), then binned into grid
//! increments; the continuous part is an Euler scheme with left-endpoint coefficients.
//! Infinite-activity jumps are simulated on the window `(ε₀, 1]`; jumps below the cutoff
//! `ε₀` are dropped together with their (zero-mean) compensated contribution, so every
//! path splits exactly into diffusion, finite-activity and infinite-activity parts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CommonFiniteActivitySpec, CopulaSpec, FiniteActivityJumpSpec, InfiniteActivityJumpSpec,
    ModelSpec, StableLikeTail, VolSpec,
};
use crate::sum::NeumaierSum;

/// `n` equal steps over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub horizon: f64,
}

impl Grid {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("grid", "need at least one step"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("grid", "horizon must be > 0"));
        }
        Ok(Grid { n, horizon })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// `t_j = j · h`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.time(j)).collect()
    }

    /// 0-based index of the increment `(t_{j-1}, t_j]` containing `t ∈ (0, horizon]`.
    pub fn bin(&self, t: f64) -> usize {
        let k = (t / self.h()).ceil() as usize;
        k.clamp(1, self.n) - 1
    }
}

/// How the infinite-activity series is truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffPolicy {
    /// Fixed cutoff `ε₀ ∈ (0, 1)`.
    Explicit { eps0: f64 },
    /// Smallest `ε₀` with `η²(ε₀) <= δ η²(1)` on every branch, i.e. `ε₀ = δ^{1/(2-α)}`.
    ResidualFraction { delta: f64 },
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy::ResidualFraction { delta: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub cutoff: CutoffPolicy,
    /// With an explicit cutoff, reject it when the dropped variance fraction
    /// `η²(ε₀)/η²(1)` exceeds this bound on any branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residual_fraction: Option<f64>,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        SimConfig {
            n,
            seed,
            cutoff: CutoffPolicy::default(),
            max_residual_fraction: None,
        }
    }

    pub fn with_cutoff(mut self, eps0: f64) -> Self {
        self.cutoff = CutoffPolicy::Explicit { eps0 };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("sim config", "n must be >= 2"));
        }
        match self.cutoff {
            CutoffPolicy::Explicit { eps0 } if !(eps0 > 0.0 && eps0 < 1.0) => Err(Error::invalid(
                "sim config",
                "explicit cutoff must lie in (0, 1)",
            )),
            CutoffPolicy::ResidualFraction { delta } if !(delta > 0.0 && delta < 1.0) => Err(
                Error::invalid("sim config", "residual fraction must lie in (0, 1)"),
            ),
            _ => Ok(()),
        }
    }
}

fn ia_branches(spec: &ModelSpec) -> Vec<StableLikeTail> {
    [&spec.ia1, &spec.ia2]
        .into_iter()
        .flatten()
        .flat_map(|s| std::iter::once(s.positive()).chain(s.negative))
        .collect()
}

/// The cutoff `ε₀` a config implies for a model. Models without infinite-activity jumps
/// get `None`.
pub fn resolve_cutoff(spec: &ModelSpec, config: &SimConfig) -> Result<Option<f64>> {
    config.validate()?;
    let branches = ia_branches(spec);
    if branches.is_empty() {
        return Ok(None);
    }
    let eps0 = match config.cutoff {
        CutoffPolicy::Explicit { eps0 } => {
            if let Some(bound) = config.max_residual_fraction {
                for b in &branches {
                    let frac = eps0.powf(2.0 - b.alpha);
                    if frac > bound {
                        return Err(Error::invalid(
                            "cutoff",
                            format!(
                                "eps0 = {eps0} leaves residual variance fraction {frac:.3e} > {bound:.3e} (alpha = {})",
                                b.alpha
                            ),
                        ));
                    }
                }
            }
            eps0
        }
        CutoffPolicy::ResidualFraction { delta } => branches
            .iter()
            .map(|b| delta.powf(1.0 / (2.0 - b.alpha)))
            .fold(1.0, f64::min),
    };
    Ok(Some(eps0))
}

/// Independent RNG stream for replication `path` of a run seeded with `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// A jump hitting both components at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonJump {
    pub time: f64,
    pub x: f64,
    pub y: f64,
}

/// Every simulated jump, in continuous time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpLedger {
    /// Finite-activity jumps per component.
    pub fa: [Vec<Jump>; 2],
    /// Finite-activity jumps driven by the shared clock.
    pub common_fa: Vec<CommonJump>,
    /// Infinite-activity jumps above the cutoff that hit one component only.
    pub ia: [Vec<Jump>; 2],
    /// Infinite-activity jumps from the complete-dependence part of the copula.
    pub common_ia: Vec<CommonJump>,
}

impl JumpLedger {
    /// `Σ ΔJ⁽¹⁾ ΔJ⁽²⁾` over all jump times.
    pub fn cojump_sum(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for c in self.common_fa.iter().chain(&self.common_ia) {
            s.add(c.x * c.y);
        }
        // independent streams coincide with probability zero; counted anyway
        let all = |q: usize| -> Vec<Jump> {
            let mut v: Vec<Jump> = self.fa[q].iter().chain(&self.ia[q]).copied().collect();
            v.sort_by(|a, b| a.time.total_cmp(&b.time));
            v
        };
        let (a, b) = (all(0), all(1));
        let (mut i, mut k) = (0, 0);
        while i < a.len() && k < b.len() {
            match a[i].time.total_cmp(&b[k].time) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    s.add(a[i].size * b[k].size);
                    i += 1;
                    k += 1;
                }
            }
        }
        s.value()
    }

    /// All infinite-activity jump sizes of component `q`, common ones included.
    pub fn ia_jumps(&self, q: usize) -> impl Iterator<Item = Jump> + '_ {
        self.ia[q]
            .iter()
            .copied()
            .chain(self.common_ia.iter().map(move |c| Jump {
                time: c.time,
                size: if q == 0 { c.x } else { c.y },
            }))
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng) as u64
}

/// Uniform on `(0, horizon]`.
fn jump_time<R: Rng + ?Sized>(horizon: f64, rng: &mut R) -> f64 {
    horizon * (1.0 - rng.random::<f64>())
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

fn sort_by_time<T, F: Fn(&T) -> f64>(v: &mut [T], key: F) {
    v.sort_by(|a, b| key(a).total_cmp(&key(b)));
}

/// Compound Poisson jumps of one component on `(0, horizon]`.
pub fn simulate_fa_jumps<R: Rng + ?Sized>(
    spec: &FiniteActivityJumpSpec,
    horizon: f64,
    rng: &mut R,
) -> Vec<Jump> {
    let count = poisson_count(spec.intensity * horizon, rng);
    let mut jumps: Vec<Jump> = (0..count)
        .map(|_| Jump {
            time: jump_time(horizon, rng),
            size: spec.size.sample(rng),
        })
        .collect();
    sort_by_time(&mut jumps, |j| j.time);
    jumps
}

pub fn simulate_common_fa_jumps<R: Rng + ?Sized>(
    spec: &CommonFiniteActivitySpec,
    horizon: f64,
    rng: &mut R,
) -> Vec<CommonJump> {
    let count = poisson_count(spec.intensity * horizon, rng);
    let mut jumps: Vec<CommonJump> = (0..count)
        .map(|_| CommonJump {
            time: jump_time(horizon, rng),
            x: spec.size1.sample(rng),
            y: spec.size2.sample(rng),
        })
        .collect();
    sort_by_time(&mut jumps, |j| j.time);
    jumps
}

/// Infinite-activity jumps above `eps0` for both components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IaLedger {
    pub only: [Vec<Jump>; 2],
    pub common: Vec<CommonJump>,
}

fn in_window(x: f64, eps0: f64) -> bool {
    x > eps0 && x <= 1.0
}

/// Jumps of one sign for a pair of (optional) one-sided tails, appended with `sign`.
#[allow(clippy::too_many_arguments)]
fn simulate_branch_pair<R: Rng + ?Sized>(
    a: Option<StableLikeTail>,
    b: Option<StableLikeTail>,
    gamma: f64,
    eps0: f64,
    horizon: f64,
    sign: f64,
    out: &mut IaLedger,
    rng: &mut R,
) {
    // with only one branch present the copula has nothing to couple
    let coupled = a.is_some() && b.is_some();
    let single_weight = if coupled { gamma } else { 1.0 };
    for (q, tail) in [a, b].into_iter().enumerate() {
        let Some(t) = tail else { continue };
        let (lo, hi) = (t.tail_unchecked(1.0), t.tail_unchecked(eps0));
        let count = poisson_count(single_weight * horizon * (hi - lo), rng);
        for _ in 0..count {
            let time = jump_time(horizon, rng);
            let u = lo + (hi - lo) * open01(rng);
            let x = t.inverse_tail_unchecked(u);
            if in_window(x, eps0) {
                out.only[q].push(Jump {
                    time,
                    size: sign * x,
                });
            }
        }
    }
    if !coupled || gamma >= 1.0 {
        return;
    }
    let (ta, tb) = (a.unwrap(), b.unwrap());
    // tail-mass coordinate u drives both sizes: x = U₁⁻¹(u), y = U₂⁻¹(u)
    let u_lo = ta.tail_unchecked(1.0).min(tb.tail_unchecked(1.0));
    let u_hi = ta.tail_unchecked(eps0).max(tb.tail_unchecked(eps0));
    let count = poisson_count((1.0 - gamma) * horizon * (u_hi - u_lo), rng);
    for _ in 0..count {
        let time = jump_time(horizon, rng);
        let u = u_lo + (u_hi - u_lo) * open01(rng);
        let x = ta.inverse_tail_unchecked(u);
        let y = tb.inverse_tail_unchecked(u);
        match (in_window(x, eps0), in_window(y, eps0)) {
            (true, true) => out.common.push(CommonJump {
                time,
                x: sign * x,
                y: sign * y,
            }),
            (true, false) => out.only[0].push(Jump {
                time,
                size: sign * x,
            }),
            (false, true) => out.only[1].push(Jump {
                time,
                size: sign * y,
            }),
            (false, false) => {}
        }
    }
}

/// Infinite-activity jumps above `eps0` on `(0, horizon]` coupled by the mixture copula.
///
/// Three independent Poisson point processes: component-1-only jumps with intensity
/// `γ ν⁽¹⁾`, component-2-only jumps with `γ ν⁽²⁾`, and common jumps with intensity
/// `(1 - γ)` in the tail-mass coordinate, each mapped to `(U₁⁻¹(u), U₂⁻¹(u))`. Common
/// jumps whose partner falls outside `(ε₀, 1]` contribute to one component only, which
/// keeps both marginals equal to `ν⁽q⁾` on the window. Positive and negative branches are
/// coupled separately.
pub fn simulate_ia_ledger<R: Rng + ?Sized>(
    spec1: Option<&InfiniteActivityJumpSpec>,
    spec2: Option<&InfiniteActivityJumpSpec>,
    copula: &CopulaSpec,
    eps0: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<IaLedger> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::domain(format!(
            "cutoff must lie in (0, 1), got {eps0}"
        )));
    }
    let mut out = IaLedger::default();
    simulate_branch_pair(
        spec1.map(|s| s.positive()),
        spec2.map(|s| s.positive()),
        copula.gamma,
        eps0,
        horizon,
        1.0,
        &mut out,
        rng,
    );
    simulate_branch_pair(
        spec1.and_then(|s| s.negative),
        spec2.and_then(|s| s.negative),
        copula.gamma,
        eps0,
        horizon,
        -1.0,
        &mut out,
        rng,
    );
    for v in out.only.iter_mut() {
        sort_by_time(v, |j| j.time);
    }
    sort_by_time(&mut out.common, |j| j.time);
    Ok(out)
}

/// Binned jumps minus the per-step compensator.
pub fn binned_increments<I: IntoIterator<Item = Jump>>(
    grid: &Grid,
    jumps: I,
    compensator: f64,
) -> Vec<f64> {
    let mut inc = vec![0.0; grid.n];
    for j in jumps {
        inc[grid.bin(j.time)] += j.size;
    }
    if compensator != 0.0 {
        inc.iter_mut().for_each(|v| *v -= compensator);
    }
    inc
}

/// Compensated infinite-activity increments of both components.
#[derive(Debug, Clone, PartialEq)]
pub struct IaSimulation {
    pub ledger: IaLedger,
    pub increments: [Vec<f64>; 2],
}

/// Ledger plus per-step compensated increments `ΔJ̃₂⁽q⁾_j` on `grid`; components without a
/// spec get zero increments.
pub fn simulate_ia_jumps<R: Rng + ?Sized>(
    spec1: Option<&InfiniteActivityJumpSpec>,
    spec2: Option<&InfiniteActivityJumpSpec>,
    copula: &CopulaSpec,
    eps0: f64,
    grid: &Grid,
    rng: &mut R,
) -> Result<IaSimulation> {
    let ledger = simulate_ia_ledger(spec1, spec2, copula, eps0, grid.horizon, rng)?;
    let increments = ia_increments(&ledger, [spec1, spec2], eps0, grid)?;
    Ok(IaSimulation { ledger, increments })
}

fn ia_increments(
    ledger: &IaLedger,
    specs: [Option<&InfiniteActivityJumpSpec>; 2],
    eps0: f64,
    grid: &Grid,
) -> Result<[Vec<f64>; 2]> {
    let mut out: [Vec<f64>; 2] = [vec![0.0; grid.n], vec![0.0; grid.n]];
    for q in 0..2 {
        let Some(spec) = specs[q] else { continue };
        let comp = spec.total_compensator(eps0, grid.h())?;
        let common = ledger.common.iter().map(|c| Jump {
            time: c.time,
            size: if q == 0 { c.x } else { c.y },
        });
        out[q] = binned_increments(grid, ledger.only[q].iter().copied().chain(common), comp);
    }
    Ok(out)
}

/// Correlated Brownian increments with left-endpoint correlation `rho[j]`:
/// `ΔW⁽²⁾ = ρ ΔW⁽¹⁾ + √(1-ρ²) ΔW⁽³⁾`.
pub fn simulate_brownian_pair<R: Rng + ?Sized>(
    rho: &[f64],
    h: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(r) = rho.iter().find(|r| !(r.abs() <= 1.0)) {
        return Err(Error::domain(format!("correlation {r} outside [-1, 1]")));
    }
    let sd = h.sqrt();
    let mut w1 = Vec::with_capacity(rho.len());
    let mut w2 = Vec::with_capacity(rho.len());
    for &r in rho {
        let z1: f64 = StandardNormal.sample(rng);
        let z3: f64 = StandardNormal.sample(rng);
        let (a, b) = (sd * z1, sd * z3);
        w1.push(a);
        w2.push(r * a + (1.0 - r * r).sqrt() * b);
    }
    Ok((w1, w2))
}

fn vol_path<R: Rng + ?Sized>(spec: &VolSpec, grid: &Grid, rng: &mut R) -> Vec<f64> {
    match spec {
        VolSpec::SquareRoot {
            kappa,
            theta,
            xi,
            v0,
        } => {
            let h = grid.h();
            let sd = h.sqrt();
            let mut v = *v0;
            (0..grid.n)
                .map(|_| {
                    let vp = v.max(0.0);
                    let z: f64 = StandardNormal.sample(rng);
                    let sigma = vp.sqrt();
                    v += kappa * (theta - vp) * h + xi * sigma * sd * z;
                    sigma
                })
                .collect()
        }
        other => {
            let f = other.as_time_fn().expect("deterministic vol");
            (0..grid.n).map(|j| f.eval(grid.time(j))).collect()
        }
    }
}

/// Cumulative component paths, all starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Continuous part `D⁽q⁾`.
    pub diffusion: [Vec<f64>; 2],
    /// Finite-activity part `J₁⁽q⁾`.
    pub fa: [Vec<f64>; 2],
    /// Compensated infinite-activity part `J̃₂⁽q⁾`.
    pub ia: [Vec<f64>; 2],
}

/// Ground-truth integrals of the coefficient path (left-endpoint Riemann sums) and the
/// true co-jump sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `∫ ρ σ⁽¹⁾ σ⁽²⁾ dt`.
    pub integrated_cov: f64,
    /// `∫ (σ⁽¹⁾)² (σ⁽²⁾)² dt`.
    pub integrated_var_product: f64,
    /// `∫ ρ² (σ⁽¹⁾)² (σ⁽²⁾)² dt`.
    pub integrated_cov_squared: f64,
    /// `Σ ΔJ⁽¹⁾ ΔJ⁽²⁾`.
    pub cojump_sum: f64,
}

impl GroundTruth {
    /// Limit of `ṽ_{2,2}`: `∫ (2ρ² + 1) σ₁² σ₂² dt`.
    pub fn v22_limit(&self) -> f64 {
        2.0 * self.integrated_cov_squared + self.integrated_var_product
    }

    /// Limit of `w̃`: `∫ ρ² σ₁² σ₂² dt`.
    pub fn w_limit(&self) -> f64 {
        self.integrated_cov_squared
    }

    /// Limit of `ṽ_{2,2} - w̃`: `∫ (1 + ρ²) σ₁² σ₂² dt`.
    pub fn stderr_limit(&self) -> f64 {
        self.integrated_cov_squared + self.integrated_var_product
    }
}

/// Run metadata carried into exported files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathMeta {
    pub spec_hash: String,
    pub seed: u64,
}

/// Discrete observations of `(X⁽¹⁾, X⁽²⁾)` on an equally spaced grid, with the ground truth
/// when the path was simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x0: [f64; 2],
    pub decomposition: Option<Decomposition>,
    pub truth: Option<GroundTruth>,
    pub ledger: Option<JumpLedger>,
    pub cutoff: Option<f64>,
    pub meta: Option<PathMeta>,
}

/// Relative tolerance within which `x = x0 + D + J₁ + J̃₂` holds on simulated paths.
pub const DECOMPOSITION_TOLERANCE: f64 = 4.0 * f64::EPSILON;

impl PathPair {
    pub fn increments(&self) -> Result<crate::estimate::IncrementPair> {
        crate::estimate::IncrementPair::from_levels(self.grid.h(), &self.x1, &self.x2)
    }

    pub fn level(&self, q: usize) -> &[f64] {
        if q == 0 {
            &self.x1
        } else {
            &self.x2
        }
    }

    /// Largest violation of the decomposition identity, relative to the magnitude of the
    /// summands. `None` without a decomposition.
    pub fn decomposition_error(&self) -> Option<f64> {
        let d = self.decomposition.as_ref()?;
        let mut worst: f64 = 0.0;
        for q in 0..2 {
            for (j, &x) in self.level(q).iter().enumerate() {
                let parts = [self.x0[q], d.diffusion[q][j], d.fa[q][j], d.ia[q][j]];
                let scale = parts
                    .iter()
                    .map(|p| p.abs())
                    .sum::<f64>()
                    .max(f64::MIN_POSITIVE);
                let sum = parts[0] + parts[1] + parts[2] + parts[3];
                worst = worst.max((x - sum).abs() / scale);
            }
        }
        Some(worst)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.grid.n;
        if self.times.len() != n + 1 || self.x1.len() != n + 1 || self.x2.len() != n + 1 {
            return Err(Error::invalid(
                "path pair",
                "every series needs n + 1 points",
            ));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "path pair",
                "grid must be strictly increasing",
            ));
        }
        if let Some(err) = self.decomposition_error() {
            if err > DECOMPOSITION_TOLERANCE {
                return Err(Error::invalid(
                    "path pair",
                    format!("decomposition violated by {err:.3e}"),
                ));
            }
        }
        Ok(())
    }
}

fn cumulative(start: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = start;
    out.push(acc);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

/// Every jump of a model on `(0, horizon]`, independent of any grid.
pub fn simulate_ledger<R: Rng + ?Sized>(
    spec: &ModelSpec,
    eps0: Option<f64>,
    rng: &mut R,
) -> Result<JumpLedger> {
    let horizon = spec.horizon;
    let mut ledger = JumpLedger::default();
    for q in 0..2 {
        if let Some(fa) = spec.fa(q) {
            ledger.fa[q] = simulate_fa_jumps(fa, horizon, rng);
        }
    }
    if let Some(c) = &spec.common_fa {
        ledger.common_fa = simulate_common_fa_jumps(c, horizon, rng);
    }
    if spec.has_ia() {
        let eps0 = eps0
            .ok_or_else(|| Error::invalid("sim config", "infinite-activity jumps need a cutoff"))?;
        let ia = simulate_ia_ledger(
            spec.ia1.as_ref(),
            spec.ia2.as_ref(),
            &spec.copula,
            eps0,
            horizon,
            rng,
        )?;
        ledger.ia = ia.only;
        ledger.common_ia = ia.common;
    }
    Ok(ledger)
}

/// Paths on an `n`-step grid from a given jump ledger; `rng` drives the continuous part only.
pub fn assemble_from_ledger<R: Rng + ?Sized>(
    spec: &ModelSpec,
    n: usize,
    ledger: JumpLedger,
    eps0: Option<f64>,
    rng: &mut R,
) -> Result<PathPair> {
    let grid = Grid::new(n, spec.horizon)?;
    let h = grid.h();
    let coef = &spec.coefficients;

    let sigma = [
        vol_path(&coef.vol1, &grid, rng),
        vol_path(&coef.vol2, &grid, rng),
    ];
    let rho: Vec<f64> = (0..n).map(|j| coef.corr.eval(grid.time(j))).collect();
    let (w1, w2) = simulate_brownian_pair(&rho, h, rng)?;
    let dw = [w1, w2];

    let mut diffusion_inc: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for q in 0..2 {
        let drift = coef.drift(q);
        for j in 0..n {
            diffusion_inc[q].push(drift.eval(grid.time(j)) * h + sigma[q][j] * dw[q][j]);
        }
    }

    let fa_inc: [Vec<f64>; 2] = std::array::from_fn(|q| {
        let common = ledger.common_fa.iter().map(|c| Jump {
            time: c.time,
            size: if q == 0 { c.x } else { c.y },
        });
        binned_increments(&grid, ledger.fa[q].iter().copied().chain(common), 0.0)
    });

    let ia_inc: [Vec<f64>; 2] = match eps0 {
        Some(e) if spec.has_ia() => {
            let ia = IaLedger {
                only: ledger.ia.clone(),
                common: ledger.common_ia.clone(),
            };
            ia_increments(&ia, [spec.ia1.as_ref(), spec.ia2.as_ref()], e, &grid)?
        }
        _ => [vec![0.0; n], vec![0.0; n]],
    };

    let decomposition = Decomposition {
        diffusion: std::array::from_fn(|q| cumulative(0.0, &diffusion_inc[q])),
        fa: std::array::from_fn(|q| cumulative(0.0, &fa_inc[q])),
        ia: std::array::from_fn(|q| cumulative(0.0, &ia_inc[q])),
    };
    let level = |q: usize| -> Vec<f64> {
        (0..=n)
            .map(|j| {
                spec.x0[q]
                    + decomposition.diffusion[q][j]
                    + decomposition.fa[q][j]
                    + decomposition.ia[q][j]
            })
            .collect()
    };
    let (x1, x2) = (level(0), level(1));

    let mut cov = NeumaierSum::new();
    let mut var_prod = NeumaierSum::new();
    let mut cov_sq = NeumaierSum::new();
    for j in 0..n {
        let s = sigma[0][j] * sigma[1][j];
        cov.add(rho[j] * s * h);
        var_prod.add(s * s * h);
        cov_sq.add(rho[j] * rho[j] * s * s * h);
    }
    let truth = GroundTruth {
        integrated_cov: cov.value(),
        integrated_var_product: var_prod.value(),
        integrated_cov_squared: cov_sq.value(),
        cojump_sum: ledger.cojump_sum(),
    };

    Ok(PathPair {
        grid,
        times: grid.times(),
        x1,
        x2,
        x0: spec.x0,
        decomposition: Some(decomposition),
        truth: Some(truth),
        ledger: Some(ledger),
        cutoff: eps0,
        meta: None,
    })
}

/// Simulate one path pair; the replication stream is `path_rng(config.seed, 0)`.
pub fn assemble_paths(spec: &ModelSpec, config: &SimConfig) -> Result<PathPair> {
    simulate_path(spec, config, 0)
}

/// Replication `path` of a run: an independent stream derived from `(config.seed, path)`.
pub fn simulate_path(spec: &ModelSpec, config: &SimConfig, path: u64) -> Result<PathPair> {
    spec.validate()?;
    let eps0 = resolve_cutoff(spec, config)?;
    let mut rng = path_rng(config.seed, path);
    let ledger = simulate_ledger(spec, eps0, &mut rng)?;
    assemble_from_ledger(spec, config.n, ledger, eps0, &mut rng)
}
