//! Independent oracles shared by the integration tests: exact summation, brute-force
//! statistics, ulp distances and Gauss-Legendre quadrature.
#![allow(dead_code)]

/// Correctly rounded sum of floats (Shewchuk's partials, as in Python's `math.fsum`).
pub fn fsum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round-half-even correction of the final partials
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Spacing of floats at `|x|`.
pub fn ulp(x: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        return f64::from_bits(1);
    }
    f64::from_bits(a.to_bits() + 1) - a
}

/// `|a - b|` in units of the spacing at `scale`.
pub fn ulps_apart(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / ulp(scale)
}

fn keep(x: f64, r: f64) -> bool {
    x * x <= r
}

pub fn brute_realized_cov(dx1: &[f64], dx2: &[f64]) -> f64 {
    let mut terms = Vec::new();
    for j in 0..dx1.len() {
        terms.push(dx1[j] * dx2[j]);
    }
    fsum(terms)
}

/// `h^{1-(r+l)/2} Σ x^r y^l` over intervals where both squared increments are `<= level`.
pub fn brute_threshold_stat(h: f64, dx1: &[f64], dx2: &[f64], r: i32, l: i32, level: f64) -> f64 {
    let mut terms = Vec::new();
    for j in 0..dx1.len() {
        let (x, y) = (dx1[j], dx2[j]);
        if keep(x, level) && keep(y, level) {
            let mut xr = 1.0;
            for _ in 0..r {
                xr *= x;
            }
            let mut yl = 1.0;
            for _ in 0..l {
                yl *= y;
            }
            terms.push(xr * yl);
        }
    }
    fsum(terms) * h.powf(1.0 - f64::from(r + l) / 2.0)
}

pub fn brute_adjacent_stat(h: f64, dx1: &[f64], dx2: &[f64], level: f64) -> f64 {
    let t = |x: f64| if keep(x, level) { x } else { 0.0 };
    let mut terms = Vec::new();
    for j in 0..dx1.len() - 1 {
        terms.push(t(dx1[j]) * t(dx1[j + 1]) * t(dx2[j]) * t(dx2[j + 1]));
    }
    fsum(terms) / h
}

/// 1-based indices of intervals where both increments exceed the level.
pub fn brute_flagged(dx1: &[f64], dx2: &[f64], level: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for j in 0..dx1.len() {
        if !keep(dx1[j], level) && !keep(dx2[j], level) {
            out.push(j + 1);
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite 20-point Gauss-Legendre quadrature of `f` on `[a, b]` with `panels` panels.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(20);
    let w = (b - a) / panels as f64;
    let mut terms = Vec::with_capacity(panels * 20);
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * w;
        for &(x, wt) in &rule {
            terms.push(0.5 * w * wt * f(mid + 0.5 * w * x));
        }
    }
    fsum(terms)
}

/// `∫_lo^hi x^k · c x^{-1-α} dx`, integrated in `u = ln x` where the integrand is
/// `c e^{(k-α)u}`; panels are short enough that it changes by at most a factor `e` on each.
pub fn quad_moment(c: f64, alpha: f64, k: f64, lo: f64, hi: f64) -> f64 {
    quad_moment_log(c, alpha, k, lo.ln(), hi.ln())
}

/// [`quad_moment`] with the limits given as logarithms.
pub fn quad_moment_log(c: f64, alpha: f64, k: f64, a: f64, b: f64) -> f64 {
    let f = move |u: f64| c * ((k - alpha) * u).exp();
    let panels = (((k - alpha).abs() * (b - a)).ceil() as usize).max(4);
    integrate(&f, a, b, panels)
}

/// `∫_0^eps x² ν(dx)`, with the lower limit pushed to where the remainder is below 1e-26.
pub fn quad_second_moment(c: f64, alpha: f64, eps: f64) -> f64 {
    let ln_eps = eps.ln();
    quad_moment_log(c, alpha, 2.0, ln_eps - 60.0 / (2.0 - alpha), ln_eps)
}

/// Small deterministic generator for test inputs (SplitMix64).
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Normal-ish increment with occasional jumps, so thresholds bite.
    pub fn increment(&mut self, scale: f64) -> f64 {
        let z = (0..12).map(|_| self.unit()).sum::<f64>() - 6.0;
        let jump = if self.unit() < 0.1 {
            self.range(-1.0, 1.0)
        } else {
            0.0
        };
        z * scale + jump
    }

    /// Multiple of `2^-10` in `[-8, 8]`: products and sums of a few hundred of these are exact.
    pub fn dyadic(&mut self) -> f64 {
        (self.below(1 << 14) as f64 - 8192.0) / 1024.0
    }
}

#[test]
fn fsum_is_exact_on_cancelling_input() {
    assert_eq!(fsum([1e100, 1.0, -1e100, 1e-100]), 1.0);
    assert_eq!(fsum([0.1; 10]), 1.0);
}

#[test]
fn quadrature_matches_polynomial() {
    let v = integrate(&|x| x * x, 0.0, 3.0, 3);
    assert!((v - 9.0).abs() < 1e-13);
    let e = integrate(&f64::exp, 0.0, 5.0, 5);
    assert!((e / (5f64.exp() - 1.0) - 1.0).abs() < 1e-14);
}
