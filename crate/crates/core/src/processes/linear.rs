//! Causal linear process `X_k = Σ_j a_j ε_{k-j}` with
//! `a_0 = 1 + u_0` and `a_k = k^{-(α+1)} + (-1)^k u_k`.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use super::{Innovation, ProcessSpec, USequence};
use crate::error::{invalid, Result};

/// Largest filter length chosen automatically.
pub const MAX_LAG_TRUNC: usize = 1 << 16;
const TAIL_TOL: f64 = 1e-12;
const DIRECT_TERMS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub alpha: f64,
    pub u_seq: USequence,
    pub innovation: Innovation,
    /// `a_0..=a_J`
    pub coefficients: Vec<f64>,
    /// `Σ_{k>J} a_k² / Σ_k a_k²`
    pub tail_ratio: f64,
}

/// Path `X_1..X_n` with the innovations `ε_{-J}..ε_n` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSample {
    pub values: Vec<f64>,
    /// `innovations[i] = ε_{i-J}`
    pub innovations: Vec<f64>,
    pub lag_trunc: usize,
}

impl LinearSample {
    /// `ε_{-j}` for `0 <= j <= J`.
    pub fn past(&self, j: usize) -> f64 {
        self.innovations[self.lag_trunc - j]
    }
}

fn u_value(u: &USequence, k: usize) -> f64 {
    match *u {
        USequence::Zero => 0.0,
        USequence::Power { exponent } => ((k + 1) as f64).powf(-exponent),
    }
}

fn coefficient(alpha: f64, u: &USequence, k: usize) -> f64 {
    if k == 0 {
        1.0 + u_value(u, 0)
    } else {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        (k as f64).powf(-(alpha + 1.0)) + sign * u_value(u, k)
    }
}

/// `Σ_{k>=K} a_k²` beyond the directly summed range, by integral comparison
/// of the two monotone parts; the alternating cross term is dropped.
fn far_tail(alpha: f64, u: &USequence, from: usize) -> f64 {
    let x = from as f64 - 0.5;
    let e = 2.0 * alpha + 1.0;
    let mut t = x.powf(-e) / e;
    if let USequence::Power { exponent } = *u {
        let e = 2.0 * exponent - 1.0;
        t += (x + 1.0).powf(-e) / e;
    }
    t
}

impl Linear {
    pub fn new(alpha: f64, u_seq: USequence, innovation: Innovation, lag_trunc: Option<usize>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(invalid("alpha", "must be positive"));
        }
        if let USequence::Power { exponent } = u_seq {
            if !(exponent > 0.5) {
                return Err(invalid("u_seq", "power sequence is square summable only for exponent > 1/2"));
            }
        }
        innovation.validate()?;
        if innovation.variance().is_none() {
            return Err(invalid("innovation", "needs a finite variance"));
        }
        if lag_trunc == Some(0) {
            return Err(invalid("lag_trunc", "must be positive"));
        }
        // Suffix sums of a_k² over the direct range.
        let squares: Vec<f64> = (0..DIRECT_TERMS).map(|k| coefficient(alpha, &u_seq, k).powi(2)).collect();
        let far = far_tail(alpha, &u_seq, DIRECT_TERMS);
        let mut suffix = vec![0.0; MAX_LAG_TRUNC + 2];
        let mut acc = far;
        for k in (MAX_LAG_TRUNC + 1..DIRECT_TERMS).rev() {
            acc += squares[k];
        }
        suffix[MAX_LAG_TRUNC + 1] = acc;
        for k in (0..=MAX_LAG_TRUNC).rev() {
            acc += squares[k];
            suffix[k] = acc;
        }
        let total = suffix[0];
        let j = match lag_trunc {
            Some(j) => j,
            None => (0..=MAX_LAG_TRUNC).find(|&j| suffix[j + 1] < TAIL_TOL * total).unwrap_or(MAX_LAG_TRUNC),
        };
        let tail = if j <= MAX_LAG_TRUNC {
            suffix[j + 1]
        } else {
            far_tail(alpha, &u_seq, j + 1)
        };
        Ok(Linear {
            alpha,
            u_seq,
            innovation,
            coefficients: (0..=j).map(|k| coefficient(alpha, &u_seq, k)).collect(),
            tail_ratio: tail / total,
        })
    }

    pub fn from_spec(spec: &ProcessSpec) -> Result<Self> {
        match *spec {
            ProcessSpec::Linear { alpha, u_seq, innovation, lag_trunc } => Self::new(alpha, u_seq, innovation, lag_trunc),
            ref other => Err(invalid("family", format!("expected linear, got {}", other.family()))),
        }
    }

    pub fn lag_trunc(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `Cov(X_0, X_h) = Var(ε) Σ_j a_j a_{j+h}` for the truncated filter.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        let v = self.innovation.variance().expect("validated");
        let a = &self.coefficients;
        v * a.iter().zip(a.iter().skip(lag)).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> LinearSample {
        let j = self.lag_trunc();
        let innovations: Vec<f64> = (0..j + n + 1).map(|_| self.innovation.sample(rng)).collect();
        // X_k = Σ_i a_i ε_{k-i} = Σ_i a_i innovations[k + J - i], k = 1..n
        let full = convolve(&self.coefficients, &innovations);
        let values = (1..=n).map(|k| full[k + j]).collect();
        LinearSample { values, innovations, lag_trunc: j }
    }

    /// `b_j = Σ_{k=j+1}^{j+n} a_k` so that `E(S_n | F_0) = Σ_j b_j ε_{-j}`.
    pub fn conditional_weights(&self, n: usize) -> Vec<f64> {
        let a = &self.coefficients;
        let mut prefix = Vec::with_capacity(a.len() + 1);
        prefix.push(0.0);
        for x in a {
            prefix.push(prefix.last().unwrap() + x);
        }
        let at = |k: usize| prefix[k.min(a.len())];
        (0..a.len()).map(|j| at(j + n + 1) - at(j + 1)).collect()
    }

    /// `E(S_n | F_0)` on a stored sample.
    pub fn conditional_sum(&self, n: usize, sample: &LinearSample) -> f64 {
        self.conditional_weights(n).iter().enumerate().map(|(j, b)| b * sample.past(j)).sum()
    }

    /// `‖E(S_n | F_0)‖_2`
    pub fn conditional_sum_l2(&self, n: usize) -> f64 {
        let v = self.innovation.variance().expect("validated");
        (v * self.conditional_weights(n).iter().map(|b| b * b).sum::<f64>()).sqrt()
    }

    /// `‖E(S_n | F_0)‖_p`, exact for Gaussian innovations.
    pub fn conditional_sum_lp(&self, n: usize, p: f64) -> Option<f64> {
        match self.innovation {
            Innovation::Gaussian { .. } => {
                let sd = self.conditional_sum_l2(n);
                let abs_moment = 2f64.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0)
                    / std::f64::consts::PI.sqrt();
                Some(sd * abs_moment.powf(1.0 / p))
            }
            _ => None,
        }
    }
}

/// Full linear convolution by FFT.
fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = (a.len() + b.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        v.resize(len, Complex64::new(0.0, 0.0));
        v
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(a.len() + b.len() - 1).map(|c| c.re / len as f64).collect()
}
