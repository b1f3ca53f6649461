//! Model description for a bivariate jump-diffusion
//!
//! ```text
//! X(q)_t = x0(q) + ∫ a(q) ds + ∫ σ(q) dW(q) + J1(q)_t + J2(q)_t,   q = 1, 2
//! ```
//!
//! with correlated Brownian drivers, finite-activity (compound Poisson) jumps `J1` and
//! compensated stable-like jumps `J2` whose Lévy measure is `c x^{-1-α}` on `(0, 1]`,
//! coupled across components by the mixture Lévy copula `γ C⊥ + (1 - γ) C∥`.
//!
//! Everything here is immutable once validated. The analytic helpers on [`StableLikeTail`]
//! (tail integral, its inverse, truncated moments, compensator) are shared by the
//! simulator and the experiment harness.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A deterministic, right-continuous function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFn {
    Constant {
        value: f64,
    },
    /// Piecewise-linear interpolation through `(times[i], values[i])`, flat outside the table.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TimeFn {
    pub fn constant(value: f64) -> Self {
        TimeFn::Constant { value }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant { value } => *value,
            TimeFn::Table { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let (t0, t1) = (times[k - 1], times[k]);
                    let w = (t - t0) / (t1 - t0);
                    values[k - 1] + w * (values[k] - values[k - 1])
                }
            }
        }
    }

    /// Smallest and largest value the function attains.
    pub fn range(&self) -> (f64, f64) {
        match self {
            TimeFn::Constant { value } => (*value, *value),
            TimeFn::Table { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        match self {
            TimeFn::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::invalid(what, "value must be finite"));
                }
            }
            TimeFn::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::invalid(
                        what,
                        "table needs equally many (>= 1) times and values",
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid(
                        what,
                        "table times must be strictly increasing",
                    ));
                }
                if times.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::invalid(what, "table entries must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Volatility `σ_t` of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolSpec {
    Constant {
        value: f64,
    },
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    /// `σ² = v` with `dv = κ(θ - v)dt + ξ √v dB`, `B` independent of everything else.
    /// Simulated by full-truncation Euler.
    SquareRoot {
        kappa: f64,
        theta: f64,
        xi: f64,
        v0: f64,
    },
}

impl VolSpec {
    pub fn constant(value: f64) -> Self {
        VolSpec::Constant { value }
    }

    /// The deterministic part of the spec as a [`TimeFn`], if there is one.
    pub fn as_time_fn(&self) -> Option<TimeFn> {
        match self {
            VolSpec::Constant { value } => Some(TimeFn::Constant { value: *value }),
            VolSpec::Table { times, values } => Some(TimeFn::Table {
                times: times.clone(),
                values: values.clone(),
            }),
            VolSpec::SquareRoot { .. } => None,
        }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        match self {
            VolSpec::SquareRoot {
                kappa,
                theta,
                xi,
                v0,
            } => {
                let ok = [kappa, theta, xi, v0]
                    .iter()
                    .all(|v| v.is_finite() && **v >= 0.0);
                if !ok {
                    return Err(Error::invalid(
                        what,
                        "square-root parameters must be finite and >= 0",
                    ));
                }
            }
            _ => {
                let f = self.as_time_fn().expect("deterministic vol");
                f.validate(what)?;
                if f.range().0 < 0.0 {
                    return Err(Error::invalid(what, "volatility must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Drift, volatility and correlation of the continuous part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(default = "zero_fn")]
    pub drift1: TimeFn,
    #[serde(default = "zero_fn")]
    pub drift2: TimeFn,
    pub vol1: VolSpec,
    pub vol2: VolSpec,
    #[serde(default = "zero_fn")]
    pub corr: TimeFn,
}

fn zero_fn() -> TimeFn {
    TimeFn::constant(0.0)
}

impl CoefficientSpec {
    /// Zero drift, constant volatilities and constant correlation.
    pub fn constant(sigma1: f64, sigma2: f64, rho: f64) -> Self {
        CoefficientSpec {
            drift1: zero_fn(),
            drift2: zero_fn(),
            vol1: VolSpec::constant(sigma1),
            vol2: VolSpec::constant(sigma2),
            corr: TimeFn::constant(rho),
        }
    }

    pub fn drift(&self, q: usize) -> &TimeFn {
        if q == 0 {
            &self.drift1
        } else {
            &self.drift2
        }
    }

    pub fn vol(&self, q: usize) -> &VolSpec {
        if q == 0 {
            &self.vol1
        } else {
            &self.vol2
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.drift1.validate("drift1")?;
        self.drift2.validate("drift2")?;
        self.vol1.validate("vol1")?;
        self.vol2.validate("vol2")?;
        self.corr.validate("corr")?;
        let (lo, hi) = self.corr.range();
        if lo < -1.0 || hi > 1.0 {
            return Err(Error::invalid("corr", "correlation must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Law of a finite-activity jump size. Samplers never return exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpSizeLaw {
    Fixed {
        value: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Asymmetric double exponential: up with probability `p_up`, magnitudes `Exp(eta_up)` / `Exp(eta_down)`.
    DoubleExponential {
        p_up: f64,
        eta_up: f64,
        eta_down: f64,
    },
}

impl JumpSizeLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match *self {
                JumpSizeLaw::Fixed { value } => value,
                JumpSizeLaw::Normal { mean, sd } => {
                    Normal::new(mean, sd).expect("validated normal").sample(rng)
                }
                JumpSizeLaw::Uniform { low, high } => rng.random_range(low..high),
                JumpSizeLaw::DoubleExponential {
                    p_up,
                    eta_up,
                    eta_down,
                } => {
                    if rng.random::<f64>() < p_up {
                        Exp::new(eta_up).expect("validated rate").sample(rng)
                    } else {
                        -Exp::new(eta_down).expect("validated rate").sample(rng)
                    }
                }
            };
            if x != 0.0 {
                return x;
            }
        }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        let ok = match *self {
            JumpSizeLaw::Fixed { value } => value.is_finite() && value != 0.0,
            JumpSizeLaw::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            JumpSizeLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            JumpSizeLaw::DoubleExponential {
                p_up,
                eta_up,
                eta_down,
            } => (0.0..=1.0).contains(&p_up) && eta_up > 0.0 && eta_down > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(what, format!("bad jump size law {self:?}")))
        }
    }
}

/// Compound Poisson jumps of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteActivityJumpSpec {
    /// Jumps per unit time.
    pub intensity: f64,
    pub size: JumpSizeLaw,
}

impl FiniteActivityJumpSpec {
    fn validate(&self, what: &'static str) -> Result<()> {
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::invalid(what, "intensity must be finite and >= 0"));
        }
        self.size.validate(what)
    }
}

/// Finite-activity jumps that hit both components at the times of one shared Poisson clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonFiniteActivitySpec {
    pub intensity: f64,
    pub size1: JumpSizeLaw,
    pub size2: JumpSizeLaw,
}

/// One-sided stable-like Lévy density `scale · x^{-1-alpha}` on `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLikeTail {
    pub scale: f64,
    pub alpha: f64,
}

impl StableLikeTail {
    pub fn new(scale: f64, alpha: f64) -> Result<Self> {
        let t = StableLikeTail { scale, alpha };
        t.validate("stable-like tail")?;
        Ok(t)
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid(what, "scale must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::invalid(what, "alpha must lie in (0, 2)"));
        }
        Ok(())
    }

    /// `U(x) = ν([x, ∞)) = c x^{-α} / α`.
    pub fn tail_integral(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("tail integral needs x > 0, got {x}")));
        }
        Ok(self.tail_unchecked(x))
    }

    pub(crate) fn tail_unchecked(&self, x: f64) -> f64 {
        self.scale * x.powf(-self.alpha) / self.alpha
    }

    /// The jump size `x` with `U(x) = u`.
    pub fn inverse_tail(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::domain(format!("inverse tail needs u > 0, got {u}")));
        }
        Ok(self.inverse_tail_unchecked(u))
    }

    pub(crate) fn inverse_tail_unchecked(&self, u: f64) -> f64 {
        (self.alpha * u / self.scale).powf(-1.0 / self.alpha)
    }

    /// `∫_{lo}^{hi} x^k ν(dx)` for `0 <= lo <= hi`, `k > α` when `lo = 0`.
    pub fn moment_band(&self, k: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let e = k - self.alpha;
        if e == 0.0 {
            self.scale * (hi / lo).ln()
        } else {
            self.scale * (hi.powf(e) - lo.powf(e)) / e
        }
    }

    /// `η²(ε) = ∫_{0 < x <= ε} x² ν(dx) = c ε^{2-α} / (2 - α)`.
    pub fn truncated_second_moment(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::domain(format!(
                "truncated second moment needs eps in (0, 1], got {eps}"
            )));
        }
        Ok(self.scale * eps.powf(2.0 - self.alpha) / (2.0 - self.alpha))
    }

    /// Mean drift `h ∫_{ε < x <= 1} x ν(dx)` removed by compensation over a step of length `h`.
    /// The `α = 1` case is the logarithm `h c ln(1/ε)`.
    pub fn compensator_mean(&self, eps: f64, h: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!(
                "compensator needs eps in (0, 1), got {eps}"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::domain(format!("compensator needs h > 0, got {h}")));
        }
        let m = if self.alpha == 1.0 {
            self.scale * (1.0 / eps).ln()
        } else {
            self.scale * (1.0 - eps.powf(1.0 - self.alpha)) / (1.0 - self.alpha)
        };
        Ok(h * m)
    }
}

/// Infinite-activity jumps of one component: a positive stable-like branch and an optional
/// mirrored negative branch with its own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfiniteActivityJumpSpec {
    pub scale: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<StableLikeTail>,
}

impl InfiniteActivityJumpSpec {
    /// Positive jumps only.
    pub fn new(scale: f64, alpha: f64) -> Result<Self> {
        let s = InfiniteActivityJumpSpec {
            scale,
            alpha,
            negative: None,
        };
        s.validate("ia jumps")?;
        Ok(s)
    }

    pub fn with_negative(mut self, negative: StableLikeTail) -> Result<Self> {
        negative.validate("ia negative branch")?;
        self.negative = Some(negative);
        Ok(self)
    }

    pub fn positive(&self) -> StableLikeTail {
        StableLikeTail {
            scale: self.scale,
            alpha: self.alpha,
        }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        self.positive().validate(what)?;
        if let Some(neg) = &self.negative {
            neg.validate(what)?;
        }
        Ok(())
    }

    /// Total compensator over one step: positive branch minus negative branch.
    pub fn total_compensator(&self, eps: f64, h: f64) -> Result<f64> {
        let mut c = self.positive().compensator_mean(eps, h)?;
        if let Some(neg) = &self.negative {
            c -= neg.compensator_mean(eps, h)?;
        }
        Ok(c)
    }

    /// `∫_{|x| <= ε} x² ν(dx)` over both branches.
    pub fn total_truncated_second_moment(&self, eps: f64) -> Result<f64> {
        let mut m = self.positive().truncated_second_moment(eps)?;
        if let Some(neg) = &self.negative {
            m += neg.truncated_second_moment(eps)?;
        }
        Ok(m)
    }
}

pub fn tail_integral(spec: &InfiniteActivityJumpSpec, x: f64) -> Result<f64> {
    spec.positive().tail_integral(x)
}

pub fn inverse_tail(spec: &InfiniteActivityJumpSpec, u: f64) -> Result<f64> {
    spec.positive().inverse_tail(u)
}

pub fn truncated_second_moment(spec: &InfiniteActivityJumpSpec, eps: f64) -> Result<f64> {
    spec.positive().truncated_second_moment(eps)
}

pub fn compensator_mean(spec: &InfiniteActivityJumpSpec, eps: f64, h: f64) -> Result<f64> {
    spec.positive().compensator_mean(eps, h)
}

/// Size of the component-2 jump paired with a component-1 jump of size `x` under complete
/// dependence: the `y` solving `U₂(y) = U₁(x)`.
pub fn dependent_partner_size(
    spec1: &InfiniteActivityJumpSpec,
    spec2: &InfiniteActivityJumpSpec,
    x: f64,
) -> Result<f64> {
    partner_on_branch(&spec1.positive(), &spec2.positive(), x)
}

pub(crate) fn partner_on_branch(a: &StableLikeTail, b: &StableLikeTail, x: f64) -> Result<f64> {
    let u = a.tail_integral(x)?;
    b.inverse_tail(u)
}

/// Mixture Lévy copula `γ C⊥ + (1 - γ) C∥`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub gamma: f64,
}

impl CopulaSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        let c = CopulaSpec { gamma };
        c.validate()?;
        Ok(c)
    }

    pub fn independence() -> Self {
        CopulaSpec { gamma: 1.0 }
    }

    pub fn complete_dependence() -> Self {
        CopulaSpec { gamma: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("copula", "gamma must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Joint tail `U(x, y) = C_γ(u, v)` for finite marginal tails `u, v`.
    /// The independence copula puts no mass off the axes.
    pub fn joint_tail(&self, u: f64, v: f64) -> f64 {
        (1.0 - self.gamma) * u.min(v)
    }
}

impl Default for CopulaSpec {
    fn default() -> Self {
        CopulaSpec::independence()
    }
}

/// Deterministic threshold `r(h) = coeff · h^beta` with `beta ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub coeff: f64,
    pub beta: f64,
}

impl ThresholdRule {
    pub fn new(coeff: f64, beta: f64) -> Result<Self> {
        let r = ThresholdRule { coeff, beta };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coeff.is_finite() && self.coeff > 0.0) {
            return Err(Error::invalid("threshold rule", "coeff must be > 0"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("threshold rule", "beta must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn level(&self, h: f64) -> f64 {
        self.coeff * h.powf(self.beta)
    }

    /// `(h log(1/h) / r(h), h log²(1/h) / r(h))`; both must vanish as `h → 0`.
    pub fn admissibility_ratios(&self, h: f64) -> (f64, f64) {
        let l = (1.0 / h).ln();
        let r = self.level(h);
        (h * l / r, h * l * l / r)
    }
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule {
            coeff: 1.0,
            beta: 0.9,
        }
    }
}

/// Full description of the bivariate process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub horizon: f64,
    #[serde(default)]
    pub x0: [f64; 2],
    pub coefficients: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fa1: Option<FiniteActivityJumpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fa2: Option<FiniteActivityJumpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_fa: Option<CommonFiniteActivitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ia1: Option<InfiniteActivityJumpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ia2: Option<InfiniteActivityJumpSpec>,
    #[serde(default)]
    pub copula: CopulaSpec,
}

impl ModelSpec {
    /// Pure diffusion with constant coefficients on `[0, horizon]`.
    pub fn diffusion(horizon: f64, coefficients: CoefficientSpec) -> Self {
        ModelSpec {
            horizon,
            x0: [0.0; 2],
            coefficients,
            fa1: None,
            fa2: None,
            common_fa: None,
            ia1: None,
            ia2: None,
            copula: CopulaSpec::default(),
        }
    }

    pub fn fa(&self, q: usize) -> Option<&FiniteActivityJumpSpec> {
        if q == 0 {
            self.fa1.as_ref()
        } else {
            self.fa2.as_ref()
        }
    }

    pub fn ia(&self, q: usize) -> Option<&InfiniteActivityJumpSpec> {
        if q == 0 {
            self.ia1.as_ref()
        } else {
            self.ia2.as_ref()
        }
    }

    pub fn has_ia(&self) -> bool {
        self.ia1.is_some() || self.ia2.is_some()
    }

    pub fn has_deterministic_coefficients(&self) -> bool {
        self.coefficients.vol1.as_time_fn().is_some()
            && self.coefficients.vol2.as_time_fn().is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("model", "horizon must be > 0"));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model", "x0 must be finite"));
        }
        self.coefficients.validate()?;
        if let Some(fa) = &self.fa1 {
            fa.validate("fa1")?;
        }
        if let Some(fa) = &self.fa2 {
            fa.validate("fa2")?;
        }
        if let Some(c) = &self.common_fa {
            if !(c.intensity.is_finite() && c.intensity >= 0.0) {
                return Err(Error::invalid(
                    "common_fa",
                    "intensity must be finite and >= 0",
                ));
            }
            c.size1.validate("common_fa")?;
            c.size2.validate("common_fa")?;
        }
        if let Some(ia) = &self.ia1 {
            ia.validate("ia1")?;
        }
        if let Some(ia) = &self.ia2 {
            ia.validate("ia2")?;
        }
        if let (Some(a), Some(b)) = (&self.ia1, &self.ia2) {
            if a.alpha > b.alpha {
                return Err(Error::invalid(
                    "model",
                    "components must be ordered so that alpha1 <= alpha2",
                ));
            }
        }
        self.copula.validate()?;
        Ok(())
    }
}
