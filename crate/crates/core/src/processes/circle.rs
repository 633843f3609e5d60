//! Random walk `ξ_{k+1} = ξ_k ± a mod 1` observed through a trigonometric
//! polynomial. The kernel is diagonal in the Fourier basis:
//! `K e_k = cos(2π k a) e_k`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{KernelOracle, Path};
use crate::error::{invalid, Result, SipError};
use crate::numtheory::{badly_approximable_report, Frequency, FrequencyId};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// `s(p) = sqrt(1 + 4p(p-2))/p - 3/p + 2`, the Fourier decay exponent
/// sufficient for the rate `n^{1/p}` on badly approximable rotations.
pub fn smoothness_exponent(p: f64) -> f64 {
    (1.0 + 4.0 * p * (p - 2.0)).sqrt() / p - 3.0 / p + 2.0
}

/// `γ(p) = (1 + sqrt(1 + 4p(p-2))) / (2p)`.
pub fn projective_exponent(p: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * p * (p - 2.0)).sqrt()) / (2.0 * p)
}

/// Both sides of `2/p - γ = 1/p - (1 - 2/p)/γ`.
pub fn exponent_identity_sides(p: f64) -> (f64, f64) {
    let g = projective_exponent(p);
    (2.0 / p - g, 1.0 / p - (1.0 - 2.0 / p) / g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub k: u32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Coefficients `f̂(k)` for `k >= 1`; `f̂(-k)` is the conjugate and `f̂(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FourierSpec {
    /// `|f̂(k)| = k^{-s(p)} log(1+k)^{-(1+eps)}` with `s(p)` from [`smoothness_exponent`].
    Default { p: f64, eps: f64, k_trunc: u32 },
    /// `|f̂(k)| = k^{-s} log(1+k)^{-(1+eps)}`.
    PowerLog { s: f64, eps: f64, k_trunc: u32 },
    /// `f(x) = 2 A cos(2π x)`.
    SingleMode { amplitude: f64 },
    Explicit { terms: Vec<FourierTerm> },
}

impl Default for FourierSpec {
    fn default() -> Self {
        FourierSpec::Default { p: 3.0, eps: 0.1, k_trunc: 256 }
    }
}

impl FourierSpec {
    /// `|f̂(k)|` of the untruncated family, when the spec is one.
    pub fn magnitude_law(&self) -> Option<(f64, f64)> {
        match *self {
            FourierSpec::Default { p, eps, .. } => Some((smoothness_exponent(p), eps)),
            FourierSpec::PowerLog { s, eps, .. } => Some((s, eps)),
            _ => None,
        }
    }

    pub fn terms(&self) -> Result<Vec<(u32, Complex64)>> {
        let power_log = |s: f64, eps: f64, k_trunc: u32| -> Result<Vec<(u32, Complex64)>> {
            if k_trunc < 1 {
                return Err(invalid("k_trunc", "must be at least 1"));
            }
            Ok((1..=k_trunc)
                .map(|k| {
                    let kf = k as f64;
                    (k, Complex64::new(kf.powf(-s) * (1.0 + kf).ln().powf(-(1.0 + eps)), 0.0))
                })
                .collect())
        };
        match self {
            FourierSpec::Default { p, eps, k_trunc } => {
                if *p < 2.0 {
                    return Err(invalid("p", "must be at least 2"));
                }
                power_log(smoothness_exponent(*p), *eps, *k_trunc)
            }
            FourierSpec::PowerLog { s, eps, k_trunc } => power_log(*s, *eps, *k_trunc),
            FourierSpec::SingleMode { amplitude } => Ok(vec![(1, Complex64::new(*amplitude, 0.0))]),
            FourierSpec::Explicit { terms } => {
                if terms.is_empty() {
                    return Err(invalid("k_trunc", "explicit spectrum needs at least one term"));
                }
                let mut out: Vec<(u32, Complex64)> = Vec::new();
                for t in terms {
                    if t.k == 0 {
                        return Err(invalid("k", "coefficients start at k = 1"));
                    }
                    out.push((t.k, Complex64::new(t.re, t.im)));
                }
                out.sort_by_key(|t| t.0);
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: u32,
    pub coef: Complex64,
    /// `cos(2π k a)`
    pub contraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circle {
    pub frequency: Frequency,
    pub spec: FourierSpec,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2 {
    pub value: f64,
    /// Bound on the contribution of the modes beyond the truncation, for
    /// specs describing an infinite spectrum.
    pub tail_bound: f64,
}

/// `Σ_{i=1}^{n-1} x^i y^{n-i}`
fn mixed_power_sum(x: f64, y: f64, n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if (x - y).abs() > 1e-6 {
        x * y * (y.powf((n - 1) as f64) - x.powf((n - 1) as f64)) / (y - x)
    } else {
        (1..n).map(|i| x.powf(i as f64) * y.powf((n - i) as f64)).sum()
    }
}

/// `Σ_{i=1}^{n} x^i`
fn geometric(x: f64, n: u64) -> f64 {
    if (1.0 - x).abs() < 1e-300 {
        return n as f64;
    }
    x * (1.0 - x.powf(n as f64)) / (1.0 - x)
}

impl Circle {
    pub fn new(frequency: FrequencyId, spec: &FourierSpec) -> Result<Self> {
        Self::with_frequency(frequency.build()?, spec)
    }

    pub fn with_frequency(frequency: Frequency, spec: &FourierSpec) -> Result<Self> {
        let modes = spec
            .terms()?
            .into_iter()
            .map(|(k, coef)| Ok(Mode { k, coef, contraction: frequency.cos_mul(k as i64)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Circle { frequency, spec: spec.clone(), modes })
    }

    pub fn k_max(&self) -> u32 {
        self.modes.iter().map(|m| m.k).max().unwrap_or(0)
    }

    /// `f(x) = Σ_k 2 Re(f̂(k) e^{2πikx})`
    pub fn eval(&self, x: f64) -> f64 {
        let z = Complex64::from_polar(1.0, TAU * x);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut k = 0;
        let mut s = 0.0;
        for m in &self.modes {
            while k < m.k {
                pow *= z;
                k += 1;
            }
            s += 2.0 * (m.coef * pow).re;
        }
        s
    }

    /// Evaluates `Σ_k 2 Re(w_k f̂(k) e^{2πikx})` with per-mode weights.
    fn eval_weighted(&self, x: f64, weights: &[f64]) -> f64 {
        let z = Complex64::from_polar(1.0, TAU * x);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut k = 0;
        let mut s = 0.0;
        for (m, w) in self.modes.iter().zip(weights) {
            while k < m.k {
                pow *= z;
                k += 1;
            }
            s += 2.0 * w * (m.coef * pow).re;
        }
        s
    }

    pub fn variance(&self) -> f64 {
        self.modes.iter().map(|m| 2.0 * m.coef.norm_sqr()).sum()
    }

    /// `Cov(X_0, X_m) = Σ_{k≠0} |f̂(k)|² cos(2πka)^m`
    pub fn covariance(&self, lag: u64) -> f64 {
        self.modes.iter().map(|m| 2.0 * m.coef.norm_sqr() * m.contraction.powf(lag as f64)).sum()
    }

    /// `σ² = Σ_{k≠0} |f̂(k)|² (1 + cos 2πka) / (1 - cos 2πka)`
    pub fn sigma2(&self) -> Result<Sigma2> {
        let mut value = 0.0;
        for m in &self.modes {
            if m.contraction >= 1.0 {
                return Err(SipError::ResonantFrequency { k: m.k as i64 });
            }
            value += 2.0 * m.coef.norm_sqr() * (1.0 + m.contraction) / (1.0 - m.contraction);
        }
        let tail_bound = match self.spec.magnitude_law() {
            Some((s, eps)) => {
                // 1 - cos(2π d) >= 8 d² and d(ka, Z) >= c/k give a term bound of |f̂(k)|² k² / (2c²).
                let report = badly_approximable_report(&self.frequency, 100_000)?;
                let c = report.c_hat;
                if c == 0.0 {
                    f64::INFINITY
                } else {
                    let coef2 = |k: f64| k.powf(-2.0 * s) * (1.0 + k).ln().powf(-2.0 - 2.0 * eps);
                    let k0 = self.k_max() as u64 + 1;
                    let k1 = 1_000_000u64.max(k0);
                    let direct: f64 = (k0..k1).map(|k| coef2(k as f64) * (k as f64).powi(2)).sum();
                    let e = 2.0 * s - 2.0;
                    let tail = if e > 1.0 { (k1 as f64).powf(1.0 - e) / (e - 1.0) } else { f64::INFINITY };
                    (direct + tail) / (2.0 * c * c)
                }
            }
            None => 0.0,
        };
        Ok(Sigma2 { value, tail_bound })
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Path> {
        let xi0: f64 = rng.random();
        let mut positions = Vec::with_capacity(n);
        let mut m: i64 = 0;
        let mut bits = 0u64;
        for k in 0..n {
            if k > 0 {
                if k % 64 == 1 {
                    bits = rng.random();
                }
                m += if bits & 1 == 1 { 1 } else { -1 };
                bits >>= 1;
            }
            positions.push(m);
        }
        let lo = *positions.iter().min().unwrap_or(&0);
        let hi = *positions.iter().max().unwrap_or(&0);
        let mut table_x = Vec::with_capacity((hi - lo + 1) as usize);
        let mut table_f = Vec::with_capacity((hi - lo + 1) as usize);
        for j in lo..=hi {
            let x = (xi0 + self.frequency.frac_mul(j)?).fract();
            table_x.push(x);
            table_f.push(self.eval(x));
        }
        let states = positions.iter().map(|p| table_x[(p - lo) as usize]).collect();
        let values = positions.iter().map(|p| table_f[(p - lo) as usize]).collect();
        Ok(Path { states, values })
    }

    fn grid(&self) -> Vec<f64> {
        let points = (16 * self.k_max() as usize).max(8192);
        (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect()
    }

    /// `‖E(X_n | ξ_0)‖_1`
    pub fn gamma(&self, n: u64) -> f64 {
        let w: Vec<f64> = self.modes.iter().map(|m| m.contraction.powf(n as f64)).collect();
        let grid = self.grid();
        grid.iter().map(|x| self.eval_weighted(*x, &w).abs()).sum::<f64>() / grid.len() as f64
    }

    /// `‖E(X_n | ξ_0)‖_p`
    pub fn conditional_mean_norm(&self, n: u64, p: f64) -> f64 {
        let w: Vec<f64> = self.modes.iter().map(|m| m.contraction.powf(n as f64)).collect();
        let grid = self.grid();
        let s: f64 = grid.iter().map(|x| self.eval_weighted(*x, &w).abs().powf(p)).sum::<f64>() / grid.len() as f64;
        s.powf(1.0 / p)
    }

    /// `‖X_0 E(X_n | ξ_0)‖_q`
    pub fn conditional_product_norm(&self, n: u64, q: f64) -> f64 {
        let w: Vec<f64> = self.modes.iter().map(|m| m.contraction.powf(n as f64)).collect();
        let grid = self.grid();
        let s: f64 = grid
            .iter()
            .map(|x| (self.eval(*x) * self.eval_weighted(*x, &w)).abs().powf(q))
            .sum::<f64>()
            / grid.len() as f64;
        s.powf(1.0 / q)
    }

    /// `‖E(S_n | ξ_0)‖_p` with `S_n = X_1 + … + X_n`.
    pub fn conditional_sum_norm(&self, n: u64, p: f64) -> f64 {
        let w: Vec<f64> = self.modes.iter().map(|m| geometric(m.contraction, n)).collect();
        let grid = self.grid();
        let s: f64 = grid.iter().map(|x| self.eval_weighted(*x, &w).abs().powf(p)).sum::<f64>() / grid.len() as f64;
        s.powf(1.0 / p)
    }

    /// `‖E(S_n² | ξ_0) - E(S_n²)‖_q` from products of Fourier modes.
    pub fn conditional_square_norm(&self, n: u64, q: f64) -> Result<f64> {
        let b = self.conditional_square_spectrum(n)?;
        let grid = self.grid();
        let s: f64 = grid
            .iter()
            .map(|x| {
                let v: f64 = b
                    .iter()
                    .map(|(m, c)| 2.0 * (c * Complex64::from_polar(1.0, TAU * *m as f64 * x)).re)
                    .sum();
                v.abs().powf(q)
            })
            .sum::<f64>()
            / grid.len() as f64;
        Ok(s.powf(1.0 / q))
    }

    /// Fourier coefficients `b_m`, `m >= 1`, of `E(S_n² | ξ_0) - E(S_n²)`;
    /// the function equals `Σ_m 2 Re(b_m e_m)`.
    pub fn conditional_square_spectrum(&self, n: u64) -> Result<Vec<(i64, Complex64)>> {
        let mut full: Vec<(i64, Complex64, f64)> = Vec::with_capacity(2 * self.modes.len());
        for m in &self.modes {
            full.push((m.k as i64, m.coef, m.contraction));
            full.push((-(m.k as i64), m.coef.conj(), m.contraction));
        }
        let kmax = 2 * self.k_max() as i64;
        let mut cos_cache = std::collections::HashMap::new();
        let mut b = vec![Complex64::new(0.0, 0.0); kmax as usize + 1];
        for (k, fk, _) in &full {
            for (l, fl, cl) in &full {
                let m = k + l;
                if m <= 0 {
                    continue;
                }
                let cm = match cos_cache.get(&m) {
                    Some(c) => *c,
                    None => {
                        let c = self.frequency.cos_mul(m)?;
                        cos_cache.insert(m, c);
                        c
                    }
                };
                // Σ_i c_m^i + 2 Σ_{i<j} c_m^i c_l^{j-i}
                let diag = geometric(cm, n);
                let cross = cl / (1.0 - cl) * (geometric(cm, n - 1) - mixed_power_sum(cm, *cl, n));
                b[m as usize] += fk * fl * (diag + 2.0 * cross);
            }
        }
        Ok(b.into_iter().enumerate().skip(1).map(|(m, c)| (m as i64, c)).filter(|(_, c)| c.norm() > 0.0).collect())
    }
}

impl KernelOracle for Circle {
    fn observable(&self, y: f64) -> Result<f64> {
        Ok(self.eval(y))
    }

    fn iterate(&self, n: u64, y: f64) -> Result<f64> {
        let w: Vec<f64> = self.modes.iter().map(|m| m.contraction.powf(n as f64)).collect();
        Ok(self.eval_weighted(y, &w))
    }

    fn iterate_sum(&self, from: u64, to: u64, y: f64) -> Result<f64> {
        let w: Vec<f64> = self
            .modes
            .iter()
            .map(|m| {
                let c = m.contraction;
                (c.powf(from as f64) - c.powf(to as f64 + 1.0)) / (1.0 - c)
            })
            .collect();
        Ok(self.eval_weighted(y, &w))
    }

    fn tail_bound(&self, n: u64, _y: f64) -> Option<f64> {
        Some(
            self.modes
                .iter()
                .map(|m| 2.0 * m.coef.norm() * (m.contraction.abs().powf(n as f64) / (1.0 - m.contraction)))
                .sum(),
        )
    }
}
