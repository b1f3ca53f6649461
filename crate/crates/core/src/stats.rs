//! Summary statistics used by the experiment harness: moments with Monte-Carlo standard
//! errors, quantiles, the Kolmogorov–Smirnov distance to the standard normal, and
//! least-squares slope fits with confidence half-widths.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::sum::NeumaierSum;

/// Mean and spread of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean, `sqrt(variance / count)`.
    pub std_error: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Result<Moments> {
        if xs.len() < 2 {
            return Err(Error::Insufficient(format!(
                "moments need at least 2 samples, got {}",
                xs.len()
            )));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().copied().collect::<NeumaierSum>().value() / n;
        let ss = xs
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<NeumaierSum>()
            .value();
        let variance = ss / (n - 1.0);
        Ok(Moments {
            count: xs.len(),
            mean,
            variance,
            std_error: (variance / n).sqrt(),
        })
    }
}

/// Streaming accumulator for mean, variance and the standard error of the variance.
///
/// Merging is order independent up to rounding, so replications can be folded in any
/// order and combined.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &RunningMoments) -> RunningMoments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        RunningMoments {
            count: self.count + other.count,
            mean,
            m2,
            m3,
            m4,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count as f64 - 1.0)
    }

    pub fn std_error_of_mean(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance, `sqrt((μ₄ - σ⁴) / N)`.
    pub fn std_error_of_variance(&self) -> f64 {
        let n = self.count as f64;
        let mu4 = self.m4 / n;
        let s2 = self.m2 / n;
        ((mu4 - s2 * s2).max(0.0) / n).sqrt()
    }
}

/// Linear-interpolated sample quantile (type 7), `p ∈ [0, 1]`.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// `sup_x |F_n(x) - Φ(x)|` of the empirical distribution of `xs` against the standard normal.
///
/// Only the jump points of the empirical CDF need checking: just before and at each order
/// statistic.
pub fn ks_distance_normal(xs: &[f64]) -> f64 {
    ks_distance(xs, standard_normal_cdf)
}

pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        // ties share one jump of the empirical CDF
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        let below = i as f64 / n;
        let at = (j + 1) as f64 / n;
        d = d.max((f - below).abs()).max((at - f).abs());
        i = j + 1;
    }
    d
}

/// Asymptotic 5% critical value `1.36 / sqrt(m)` of the one-sample KS distance.
pub fn ks_critical_95(m: usize) -> f64 {
    1.36 / (m as f64).sqrt()
}

/// Ordinary least-squares line `y = intercept + slope · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval for the slope (Student t, `k - 2` dof).
    pub half_width: f64,
    pub r_squared: f64,
    pub residual_sd: f64,
    pub max_abs_residual: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let k = x.len();
    if k < 3 {
        return Err(Error::Insufficient(format!(
            "a slope fit needs at least 3 points, got {k}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("slope fit inputs must be finite"));
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - intercept - slope * a)
        .collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let dof = kf - 2.0;
    let residual_sd = (sse / dof).sqrt();
    let se_slope = residual_sd / sxx.sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .expect("dof >= 1")
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        half_width: t * se_slope,
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
        residual_sd,
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        points: k,
    })
}

/// Log-log fit of `values` against `steps`; both must be positive.
pub fn fit_log_log(steps: &[f64], values: &[f64]) -> Result<SlopeFit> {
    if steps.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(Error::domain("log-log fit needs strictly positive data"));
    }
    let lx: Vec<f64> = steps.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Brute force: evaluate the sup over a fine set of candidate points by counting.
    fn ks_brute(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for &x in xs {
            let le = xs.iter().filter(|&&y| y <= x).count() as f64 / n;
            let lt = xs.iter().filter(|&&y| y < x).count() as f64 / n;
            let f = standard_normal_cdf(x);
            d = d.max((le - f).abs()).max((lt - f).abs());
        }
        d
    }

    proptest! {
        #[test]
        fn ks_matches_double_loop(xs in proptest::collection::vec(-4.0f64..4.0, 1..50)) {
            let a = ks_distance_normal(&xs);
            let b = ks_brute(&xs);
            prop_assert!((a - b).abs() < 1e-15);
        }

        #[test]
        fn ks_handles_ties(k in 1usize..20, x in -2.0f64..2.0) {
            let xs = vec![x; k];
            prop_assert!((ks_distance_normal(&xs) - ks_brute(&xs)).abs() < 1e-15);
        }

        #[test]
        fn running_merge_matches_single_pass(
            xs in proptest::collection::vec(-10.0f64..10.0, 2..200),
            split in 0usize..200,
        ) {
            let split = split.min(xs.len());
            let mut whole = RunningMoments::new();
            xs.iter().for_each(|&x| whole.push(x));
            let (a, b) = xs.split_at(split);
            let mut ra = RunningMoments::new();
            a.iter().for_each(|&x| ra.push(x));
            let mut rb = RunningMoments::new();
            b.iter().for_each(|&x| rb.push(x));
            let m = ra.merge(&rb);
            prop_assert_eq!(m.count(), whole.count());
            prop_assert!((m.mean() - whole.mean()).abs() < 1e-10);
            prop_assert!((m.variance() - whole.variance()).abs() < 1e-9 * (1.0 + whole.variance()));
            prop_assert!((m.std_error_of_variance() - whole.std_error_of_variance()).abs()
                < 1e-8 * (1.0 + whole.std_error_of_variance()));
        }
    }

    #[test]
    fn ks_of_constant_zero_is_half() {
        assert!((ks_distance_normal(&[0.0; 10]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_critical_value_holds_about_95_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 1000;
        let crit = ks_critical_95(m);
        let trials = 400;
        let below = (0..trials)
            .filter(|_| {
                let xs: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                ks_distance_normal(&xs) < crit
            })
            .count();
        let freq = below as f64 / trials as f64;
        // binomial sd at p = 0.95, 400 trials is 0.011
        assert!((freq - 0.95).abs() < 0.04, "coverage {freq}");
    }

    #[test]
    fn moments_of_known_sample() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(Moments::of(&[1.0]).is_err());
    }

    #[test]
    fn quantiles() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }

    #[test]
    fn synthetic_power_law_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in [0.5, 1.375, 1.875, 2.75] {
            let h: Vec<f64> = (8..=14).map(|k| 2f64.powi(-k)).collect();
            let y: Vec<f64> = h
                .iter()
                .map(|&hh| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    hh.powf(s) * (1.0 + 0.05 * z)
                })
                .collect();
            let fit = fit_log_log(&h, &y).unwrap();
            assert!((fit.slope - s).abs() <= fit.half_width, "{s}: {fit:?}");
            assert!(fit.r_squared > 0.99);
        }
    }

    #[test]
    fn exact_line() {
        let fit = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-15);
        assert!((fit.intercept - 1.0).abs() < 1e-15);
        assert!(fit.half_width < 1e-12);
        assert!(fit_line(&[0.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
