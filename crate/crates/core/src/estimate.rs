//! Threshold statistics of a pair of increment series.
//!
//! Every statistic is a truncated sum over equally spaced increments: an increment is kept
//! only when its square is at most the threshold `r(h)` (non-strict). The same threshold is
//! applied to both components unless a [`Truncation`] with distinct levels is passed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ThresholdRule;
use crate::sum::NeumaierSum;

/// Increments `ΔX⁽¹⁾, ΔX⁽²⁾` of two processes on a common grid with step `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementPair {
    h: f64,
    dx1: Vec<f64>,
    dx2: Vec<f64>,
}

impl IncrementPair {
    pub fn new(h: f64, dx1: Vec<f64>, dx2: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("step h must be > 0, got {h}")));
        }
        if dx1.len() != dx2.len() {
            return Err(Error::LengthMismatch {
                left: dx1.len(),
                right: dx2.len(),
            });
        }
        Ok(IncrementPair { h, dx1, dx2 })
    }

    /// Increments of two level series sampled on the same grid.
    pub fn from_levels(h: f64, x1: &[f64], x2: &[f64]) -> Result<Self> {
        let diff = |x: &[f64]| x.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        IncrementPair::new(h, diff(x1), diff(x2))
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dx1(&self) -> &[f64] {
        &self.dx1
    }

    pub fn dx2(&self) -> &[f64] {
        &self.dx2
    }

    pub fn len(&self) -> usize {
        self.dx1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx1.is_empty()
    }

    /// The pair with components exchanged.
    pub fn swapped(&self) -> IncrementPair {
        IncrementPair {
            h: self.h,
            dx1: self.dx2.clone(),
            dx2: self.dx1.clone(),
        }
    }
}

/// Squared-increment levels above which an increment is discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub first: f64,
    pub second: f64,
}

impl Truncation {
    pub fn shared(level: f64) -> Self {
        Truncation {
            first: level,
            second: level,
        }
    }

    /// No truncation at all.
    pub fn none() -> Self {
        Truncation::shared(f64::INFINITY)
    }

    pub fn from_rule(rule: &ThresholdRule, h: f64) -> Self {
        Truncation::shared(rule.level(h))
    }

    #[inline]
    fn keep1(&self, x: f64) -> bool {
        x * x <= self.first
    }

    #[inline]
    fn keep2(&self, y: f64) -> bool {
        y * y <= self.second
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Sequential compensated reductions with a fixed summation order. When off, long sums
    /// are split across the rayon pool and the last bits may vary between runs.
    pub deterministic: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            deterministic: true,
        }
    }
}

fn reduce<F>(n: usize, opts: EstimatorOptions, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if opts.deterministic || n < 1 << 14 {
        (0..n).map(term).collect::<NeumaierSum>().value()
    } else {
        (0..n)
            .into_par_iter()
            .fold(NeumaierSum::new, |mut s, j| {
                s.add(term(j));
                s
            })
            .reduce(NeumaierSum::new, NeumaierSum::merge)
            .value()
    }
}

/// `Σ_j ΔX⁽¹⁾_j ΔX⁽²⁾_j`.
pub fn realized_covariation(inc: &IncrementPair) -> f64 {
    realized_covariation_with(inc, EstimatorOptions::default())
}

pub fn realized_covariation_with(inc: &IncrementPair, opts: EstimatorOptions) -> f64 {
    reduce(inc.len(), opts, |j| inc.dx1[j] * inc.dx2[j])
}

/// `ṽ_{r,l} = h^{1-(r+l)/2} Σ_j (ΔX⁽¹⁾_j)^r 1{(ΔX⁽¹⁾_j)² <= r_h} (ΔX⁽²⁾_j)^l 1{(ΔX⁽²⁾_j)² <= r_h}`.
pub fn threshold_stat(inc: &IncrementPair, r: u32, l: u32, rule: &ThresholdRule) -> f64 {
    threshold_stat_at(inc, r, l, Truncation::from_rule(rule, inc.h))
}

pub fn threshold_stat_at(inc: &IncrementPair, r: u32, l: u32, trunc: Truncation) -> f64 {
    threshold_stat_with(inc, r, l, trunc, EstimatorOptions::default())
}

pub fn threshold_stat_with(
    inc: &IncrementPair,
    r: u32,
    l: u32,
    trunc: Truncation,
    opts: EstimatorOptions,
) -> f64 {
    let (ri, li) = (r as i32, l as i32);
    let s = reduce(inc.len(), opts, |j| {
        let (x, y) = (inc.dx1[j], inc.dx2[j]);
        if trunc.keep1(x) && trunc.keep2(y) {
            x.powi(ri) * y.powi(li)
        } else {
            0.0
        }
    });
    s * inc.h.powf(1.0 - f64::from(r + l) / 2.0)
}

/// `w̃ = h⁻¹ Σ_{j=1}^{n-1} ΔX⁽¹⁾_j ΔX⁽¹⁾_{j+1} ΔX⁽²⁾_j ΔX⁽²⁾_{j+1}`, each of the four factors
/// individually truncated.
pub fn adjacent_stat(inc: &IncrementPair, rule: &ThresholdRule) -> Result<f64> {
    adjacent_stat_at(inc, Truncation::from_rule(rule, inc.h))
}

pub fn adjacent_stat_at(inc: &IncrementPair, trunc: Truncation) -> Result<f64> {
    adjacent_stat_with(inc, trunc, EstimatorOptions::default())
}

pub fn adjacent_stat_with(
    inc: &IncrementPair,
    trunc: Truncation,
    opts: EstimatorOptions,
) -> Result<f64> {
    let n = inc.len();
    if n < 2 {
        return Err(Error::Insufficient(format!(
            "adjacent statistic needs at least 2 increments, got {n}"
        )));
    }
    let kept1 = |x: f64| if trunc.keep1(x) { x } else { 0.0 };
    let kept2 = |y: f64| if trunc.keep2(y) { y } else { 0.0 };
    let s = reduce(n - 1, opts, |j| {
        kept1(inc.dx1[j]) * kept1(inc.dx1[j + 1]) * kept2(inc.dx2[j]) * kept2(inc.dx2[j + 1])
    });
    Ok(s / inc.h)
}

/// A grid interval where both increments exceed the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CojumpInterval {
    /// 1-based index `j` of the interval `(t_{j-1}, t_j]`.
    pub index: usize,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CojumpEstimate {
    /// Realized covariation minus `ṽ_{1,1}`.
    pub cojump_sum: f64,
    pub intervals: Vec<CojumpInterval>,
}

pub fn cojump_estimates(inc: &IncrementPair, rule: &ThresholdRule) -> CojumpEstimate {
    cojump_estimates_at(inc, Truncation::from_rule(rule, inc.h))
}

pub fn cojump_estimates_at(inc: &IncrementPair, trunc: Truncation) -> CojumpEstimate {
    let rc = realized_covariation(inc);
    let v11 = threshold_stat_at(inc, 1, 1, trunc);
    CojumpEstimate {
        cojump_sum: rc - v11,
        intervals: flagged_intervals(inc, trunc),
    }
}

fn flagged_intervals(inc: &IncrementPair, trunc: Truncation) -> Vec<CojumpInterval> {
    inc.dx1
        .iter()
        .zip(&inc.dx2)
        .enumerate()
        .filter(|(_, (&x, &y))| !trunc.keep1(x) && !trunc.keep2(y))
        .map(|(j, (&x, &y))| CojumpInterval {
            index: j + 1,
            product: x * y,
        })
        .collect()
}

/// `(ṽ_{1,1} - truth) / (√h √(ṽ_{2,2} - w̃))`.
pub fn normalized_bias(inc: &IncrementPair, rule: &ThresholdRule, truth: f64) -> Result<f64> {
    let trunc = Truncation::from_rule(rule, inc.h);
    let v11 = threshold_stat_at(inc, 1, 1, trunc);
    let v22 = threshold_stat_at(inc, 2, 2, trunc);
    let w = adjacent_stat_at(inc, trunc)?;
    normalized_bias_from(v11, v22, w, inc.h, truth)
}

/// The normalized bias from precomputed statistics.
pub fn normalized_bias_from(v11: f64, v22: f64, w: f64, h: f64, truth: f64) -> Result<f64> {
    let var = v22 - w;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Degenerate(format!(
            "v22 - w = {var} is not a positive variance estimate"
        )));
    }
    Ok((v11 - truth) / (h.sqrt() * var.sqrt()))
}

/// All threshold statistics of one increment pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub n: usize,
    pub h: f64,
    pub threshold_used: Truncation,
    pub realized_cov: f64,
    pub v11: f64,
    pub v22: f64,
    pub w: f64,
    pub cojump_sum: f64,
    pub cojump_intervals: Vec<CojumpInterval>,
    /// Ground-truth integrated covariation, when known.
    pub truth: Option<f64>,
    /// Normalized bias; `None` without ground truth or when `v22 - w <= 0`.
    pub nb: Option<f64>,
    pub nb_degenerate: bool,
}

pub fn estimate(
    inc: &IncrementPair,
    trunc: Truncation,
    truth: Option<f64>,
    opts: EstimatorOptions,
) -> Result<EstimatorReport> {
    let realized_cov = realized_covariation_with(inc, opts);
    let v11 = threshold_stat_with(inc, 1, 1, trunc, opts);
    let v22 = threshold_stat_with(inc, 2, 2, trunc, opts);
    let w = adjacent_stat_with(inc, trunc, opts)?;
    let (nb, nb_degenerate) = match truth {
        Some(t) => match normalized_bias_from(v11, v22, w, inc.h, t) {
            Ok(v) => (Some(v), false),
            Err(Error::Degenerate(_)) => (None, true),
            Err(e) => return Err(e),
        },
        None => (None, false),
    };
    Ok(EstimatorReport {
        n: inc.len(),
        h: inc.h,
        threshold_used: trunc,
        realized_cov,
        v11,
        v22,
        w,
        cojump_sum: realized_cov - v11,
        cojump_intervals: flagged_intervals(inc, trunc),
        truth,
        nb,
        nb_degenerate,
    })
}
