//! Empirical statistics shared by every module: moment norms, distribution
//! distances, and least-squares rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SipError};

/// Sorted sample defining a right-continuous empirical CDF with equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    sorted: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SipError::EmptySample);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SipError::NonFinite);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Right-continuous CDF: fraction of sample points `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.len() as f64
    }

    /// Left limit: fraction of sample points `< x`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v < x) as f64 / self.len() as f64
    }
}

/// A distribution function. `cdf_left` defaults to `cdf`, which is right for
/// continuous laws; laws with atoms must override it.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Standard normal law.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl Cdf for StandardNormal {
    fn cdf(&self, x: f64) -> f64 {
        normal_cdf(x)
    }
}

/// Finite discrete law given by atoms and masses.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { atoms }
    }
}

impl Cdf for DiscreteLaw {
    fn cdf(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|(v, _)| *v <= x).map(|(_, w)| w).sum()
    }
    fn cdf_left(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|(v, _)| *v < x).map(|(_, w)| w).sum()
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

fn check_sample(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(SipError::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(SipError::NonFinite);
    }
    Ok(())
}

/// `(mean |x|^p)^(1/p)`.
pub fn empirical_lp_norm(samples: &[f64], p: f64) -> Result<f64> {
    check_sample(samples)?;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("must be a finite real >= 1, got {p}")));
    }
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mean = samples.iter().map(|v| (v.abs() / scale).powf(p)).sum::<f64>() / samples.len() as f64;
    Ok(scale * mean.powf(1.0 / p))
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance.
pub fn variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples.len() as f64 - 1.0)
}

pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard error of the mean.
pub fn std_error(samples: &[f64]) -> f64 {
    (variance(samples) / samples.len() as f64).sqrt()
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical CDF of `a` and
/// a reference law. Both the right values and the left limits are compared at
/// every sample point, so atoms in the reference are matched exactly.
pub fn ks_distance<C: Cdf + ?Sized>(a: &EmpiricalDist, reference: &C) -> f64 {
    let xs = a.sorted_values();
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d.max((upto - reference.cdf(x)).abs());
        d = d.max((below - reference.cdf_left(x)).abs());
        i = j;
    }
    d.min(1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &EmpiricalDist, b: &EmpiricalDist) -> f64 {
    let (xa, xb) = (a.sorted_values(), b.sorted_values());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov critical value `c(level)/sqrt(n)` for level 0.01 or 0.05.
pub fn ks_critical(n: usize, level: f64) -> f64 {
    kolmogorov_coefficient(level) / (n as f64).sqrt()
}

/// Two-sample analogue of [`ks_critical`].
pub fn ks_critical_two_sample(n: usize, m: usize, level: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    kolmogorov_coefficient(level) * ((n + m) / (n * m)).sqrt()
}

fn kolmogorov_coefficient(level: f64) -> f64 {
    // Inverse of the Kolmogorov survival function 2 Σ (-1)^{k-1} exp(-2 k² c²).
    let surv = |c: f64| {
        let mut s = 0.0;
        for k in 1..100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * c * c).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        2.0 * s
    };
    crate::numerics::bisect(|c| surv(c) - level, 0.3, 3.0, 1e-12).unwrap_or(1.36)
}

/// Lag-`k` sample autocorrelation.
pub fn autocorrelation(samples: &[f64], lag: usize) -> f64 {
    let m = mean(samples);
    let denom: f64 = samples.iter().map(|v| (v - m).powi(2)).sum();
    let num: f64 = samples.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    num / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(SipError::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.len() < 3 {
        return Err(invalid("grid", "a rate fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(SipError::NonFinite);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("grid", "abscissae must not all coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, intercept, r2, slope_stderr })
}

/// OLS of `log y` on `log n`.
pub fn loglog_rate_fit(ns: &[f64], ys: &[f64]) -> Result<RateFit> {
    if ys.iter().any(|y| !(*y > 0.0)) {
        return Err(SipError::NonPositiveInRateFit);
    }
    if ns.iter().any(|n| !(*n > 0.0)) {
        return Err(invalid("ns", "grid must be positive"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("ns", "grid must be strictly increasing"));
    }
    let lx: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly)
}

/// Dyadic grid `n0 * 2^j` for `j = 0..count`.
pub fn dyadic_grid(n0: u64, count: u32) -> Vec<u64> {
    (0..count).map(|j| n0 << j).collect()
}

/// Nonincreasing isotonic (pool-adjacent-violators) fit with weights.
pub fn isotonic_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let k = blocks.len();
            if blocks[k - 2].0 >= blocks[k - 1].0 {
                break;
            }
            let (v2, w2, c2) = blocks.pop().unwrap();
            let (v1, w1, c1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, c)| std::iter::repeat_n(v, c)).collect()
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal as Normal01;

    #[test]
    fn lp_norm_examples() {
        assert_eq!(empirical_lp_norm(&[0.0, 0.0, 0.0], 2.0).unwrap(), 0.0);
        assert_relative_eq!(empirical_lp_norm(&[1.0; 4], 3.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            empirical_lp_norm(&[1.0, 2.0, 2.0, 3.0], 2.0).unwrap(),
            (18.0f64 / 4.0).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn lp_norm_errors() {
        assert_eq!(empirical_lp_norm(&[], 2.0), Err(SipError::EmptySample));
        assert_eq!(empirical_lp_norm(&[1.0, f64::NAN], 2.0), Err(SipError::NonFinite));
        assert!(empirical_lp_norm(&[1.0], 0.5).is_err());
    }

    #[test]
    fn ks_degenerate_examples() {
        let a = EmpiricalDist::new(vec![0.0]).unwrap();
        let point = DiscreteLaw::new(vec![(0.0, 1.0)]);
        assert_eq!(ks_distance(&a, &point), 0.0);

        let a = EmpiricalDist::new(vec![-1.0, 1.0]).unwrap();
        let two = DiscreteLaw::new(vec![(-1.0, 0.5), (1.0, 0.5)]);
        assert_eq!(ks_distance(&a, &two), 0.0);
    }

    #[test]
    fn ks_normal_sample_below_critical() {
        let mut passes = 0;
        for seed in 0..20 {
            let mut rng = SeedStream::new(seed, 0).rng();
            let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(Normal01)).collect();
            let d = ks_distance(&EmpiricalDist::new(xs).unwrap(), &StandardNormal);
            if d < 1.36 / (1e5f64).sqrt() {
                passes += 1;
            }
        }
        assert!(passes >= 17, "only {passes}/20 seeds below the 5% critical value");
    }

    #[test]
    fn kolmogorov_coefficients() {
        assert_relative_eq!(kolmogorov_coefficient(0.05), 1.3581, epsilon = 1e-3);
        assert_relative_eq!(kolmogorov_coefficient(0.01), 1.6276, epsilon = 1e-3);
    }

    #[test]
    fn two_sample_ks_identical_is_zero() {
        let a = EmpiricalDist::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &a.clone()), 0.0);
        let b = EmpiricalDist::new(vec![10.0, 11.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }

    #[test]
    fn rate_fit_exact_power_laws() {
        let ns: Vec<f64> = dyadic_grid(4, 8).iter().map(|&n| n as f64).collect();
        let fit = loglog_rate_fit(&ns, &ns).unwrap();
        assert_relative_eq!(fit.slope, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);

        let ys: Vec<f64> = ns.iter().map(|n| 5.0 * n.powi(-2)).collect();
        let fit = loglog_rate_fit(&ns, &ys).unwrap();
        assert_relative_eq!(fit.slope, -2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn rate_fit_noisy_power_law() {
        let mut rng = SeedStream::new(5, 0).rng();
        let ns: Vec<f64> = dyadic_grid(8, 10).iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> =
            ns.iter().map(|n| (1.0 + 0.01 * rng.sample::<f64, _>(Normal01)) / n).collect();
        let fit = loglog_rate_fit(&ns, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.05);
    }

    #[test]
    fn rate_fit_rejects_nonpositive() {
        let err = loglog_rate_fit(&[1.0, 2.0, 4.0], &[1.0, 0.0, 1.0]).unwrap_err();
        assert_eq!(err.to_string(), "nonpositive value in rate fit");
    }

    #[test]
    fn isotonic_projection() {
        let fit = isotonic_nonincreasing(&[3.0, 1.0, 2.0, 0.5], &[1.0; 4]);
        assert_eq!(fit, vec![3.0, 1.5, 1.5, 0.5]);
    }

    #[test]
    fn fmt17_has_seventeen_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
    }

    proptest! {
        #[test]
        fn lp_norm_monotone_in_p(xs in proptest::collection::vec(-100.0f64..100.0, 1..40),
                                 p in 1.0f64..6.0, dp in 0.0f64..4.0) {
            let lo = empirical_lp_norm(&xs, p).unwrap();
            let hi = empirical_lp_norm(&xs, p + dp).unwrap();
            prop_assert!(hi >= lo * (1.0 - 1e-12));
        }
    }
}
