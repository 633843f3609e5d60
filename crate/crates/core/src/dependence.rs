//! Dependence coefficients of stationary sequences and their decay rates.
//!
//! For Markov families the conditional expectations are computed by powers
//! of the kernel (closed forms or a finite-state chain) rather than nested
//! simulation; Monte Carlo estimators exist as cross-checks.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SipError};
use crate::processes::{arl::Arl, circle::Circle, dmr::Dmr, iid::Iid, linear::Linear, DiscreteChain, Innovation, ProcessSpec};
use crate::rng::map_replicas;
use crate::stats::{fmt17, isotonic_nonincreasing, loglog_rate_fit, mean, std_error, RateFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    ExactKernel,
    BinnedMc,
    Coupling,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::ExactKernel => "exact-kernel",
            Estimator::BinnedMc => "binned-mc",
            Estimator::Coupling => "coupling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCurve {
    pub coefficient: String,
    pub lags: Vec<u64>,
    pub values: Vec<f64>,
    pub estimator: Estimator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CoefficientCurve {
    pub fn new(coefficient: &str, lags: Vec<u64>, values: Vec<f64>, estimator: Estimator) -> Result<Self> {
        if lags.len() != values.len() {
            return Err(SipError::LengthMismatch { left: lags.len(), right: values.len() });
        }
        if lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("lags", "must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SipError::NonFinite);
        }
        // Round-off can leave tiny negative values in differences of norms.
        let values = values.into_iter().map(|v| v.max(0.0)).collect();
        Ok(CoefficientCurve { coefficient: coefficient.into(), lags, values, estimator, stderr: None, notes: Vec::new() })
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn value_at(&self, lag: u64) -> Option<f64> {
        self.lags.iter().position(|l| *l == lag).map(|i| self.values[i])
    }

    /// Log-log fit over lags `>= min_lag` with positive values.
    pub fn rate_fit(&self, min_lag: u64) -> Result<RateFit> {
        let (ns, ys): (Vec<f64>, Vec<f64>) = self
            .lags
            .iter()
            .zip(&self.values)
            .filter(|(l, v)| **l >= min_lag.max(1) && **v > 0.0)
            .map(|(l, v)| (*l as f64, *v))
            .unzip();
        loglog_rate_fit(&ns, &ys)
    }

    /// Largest change made by the nonincreasing isotonic projection, in units
    /// of the standard error when one is attached.
    pub fn isotonic_residual(&self) -> f64 {
        let w: Vec<f64> = match &self.stderr {
            Some(se) => se.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1e12 }).collect(),
            None => vec![1.0; self.values.len()],
        };
        let fit = isotonic_nonincreasing(&self.values, &w);
        fit.iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (f, v))| {
                let scale = self.stderr.as_ref().map_or(1.0, |s| s[i]);
                if scale > 0.0 {
                    (f - v).abs() / scale
                } else {
                    (f - v).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `lag,value,stderr,estimator`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,value,stderr,estimator\n");
        for (i, (l, v)) in self.lags.iter().zip(&self.values).enumerate() {
            let se = self.stderr.as_ref().map(|s| fmt17(s[i])).unwrap_or_default();
            let _ = writeln!(out, "{l},{},{se},{}", fmt17(*v), self.estimator.name());
        }
        out
    }
}

/// `γ(n) = ‖E(X_n | F_0)‖_1` from the kernel.
pub fn gamma_exact(spec: &ProcessSpec, lags: &[u64]) -> Result<CoefficientCurve> {
    let values: Vec<f64> = match spec {
        ProcessSpec::Dmr { a, f_exponent } => {
            let d = Dmr::new(*a, *f_exponent)?;
            lags.par_iter().map(|n| d.conditional_mean_power(*n, 1.0)).collect::<Result<_>>()?
        }
        ProcessSpec::Circle { frequency, fourier } => {
            let c = Circle::new(*frequency, fourier)?;
            lags.par_iter().map(|n| c.gamma(*n)).collect()
        }
        ProcessSpec::Pm { .. } | ProcessSpec::Iid { .. } => {
            let chain = spec.discrete_chain()?;
            let iterates = chain.conditional_iterates(lags);
            iterates.iter().map(|v| chain.lp_norm(v, 1.0)).collect()
        }
        ProcessSpec::Linear { .. } => {
            let lin = Linear::from_spec(spec)?;
            let Innovation::Gaussian { sd } = lin.innovation else {
                return Err(SipError::NoKernelOracle("linear (exact γ needs Gaussian innovations)".into()));
            };
            // E(X_n | F_0) = Σ_{k>=n} a_k ε_{n-k} is centered normal.
            lags.iter()
                .map(|n| {
                    let v: f64 = lin.coefficients.iter().skip(*n as usize).map(|a| a * a).sum();
                    sd * v.sqrt() * (2.0 / std::f64::consts::PI).sqrt()
                })
                .collect()
        }
        other => return Err(SipError::NoKernelOracle(other.family().into())),
    };
    CoefficientCurve::new("gamma", lags.to_vec(), values, Estimator::ExactKernel)
}

/// `γ(n)` from simulated paths: bin `Y_0` into equal-count bins and average
/// `|E(X_n | bin)|` with bin weights.
pub fn gamma_binned_mc(spec: &ProcessSpec, lags: &[u64], replicas: usize, bins: usize, root_seed: u64) -> Result<CoefficientCurve> {
    if bins < 2 || replicas < 2 * bins {
        return Err(invalid("bins", "need at least 2 bins and 2 replicas per bin"));
    }
    let n_max = *lags.iter().max().ok_or(SipError::EmptySample)? as usize;
    let sampler = spec.sampler()?;
    let paths = map_replicas(root_seed, replicas, |_, seed| sampler.sample_path(n_max + 1, &mut seed.rng()));
    let mut rows = Vec::with_capacity(replicas);
    for p in paths {
        let p = p?;
        let y0 = *p.states.first().ok_or_else(|| SipError::NoKernelOracle(format!("{} (no state path)", spec.family())))?;
        rows.push((y0, p.values));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let per_bin = replicas / bins;
    let mut values = Vec::with_capacity(lags.len());
    let mut errors = Vec::with_capacity(lags.len());
    for &n in lags {
        let mut g = 0.0;
        let mut var = 0.0;
        for b in 0..bins {
            let hi = if b + 1 == bins { replicas } else { (b + 1) * per_bin };
            let xs: Vec<f64> = rows[b * per_bin..hi].iter().map(|r| r.1[n as usize]).collect();
            let w = xs.len() as f64 / replicas as f64;
            g += w * mean(&xs).abs();
            var += (w * std_error(&xs)).powi(2);
        }
        values.push(g);
        errors.push(var.sqrt());
    }
    Ok(CoefficientCurve::new("gamma", lags.to_vec(), values, Estimator::BinnedMc)?.with_stderr(errors))
}

/// Gaps `i_2 - i_1` examined in the two-index sup.
pub const PAIR_GAPS: [u64; 6] = [0, 1, 2, 4, 8, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub curve: CoefficientCurve,
    /// `α_1` on the finer threshold grid, when requested.
    pub refined: Option<Vec<f64>>,
    /// Largest relative change between the two grids.
    pub grid_sensitivity: Option<f64>,
}

impl DiscreteChain {
    /// `K^n f` for every `n` in the ascending grid.
    pub fn conditional_iterates(&self, grid: &[u64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut v = self.observable.clone();
        let mut level = 0;
        for &n in grid {
            while level < n {
                v = self.apply(&v);
                level += 1;
            }
            out.push(v.clone());
        }
        out
    }

    /// Centered indicator `1{Y <= x} - F(x)` on the states.
    fn centered_indicator(&self, x: f64) -> Vec<f64> {
        let f = self.cdf(x);
        self.states.iter().map(|s| f64::from(u8::from(*s <= x)) - f).collect()
    }
}

/// Evolves a family of vectors under `K` and records, for each lag, the
/// largest centered `L^1` norm among them.
fn sup_centered_l1(chain: &DiscreteChain, mut vectors: Vec<Vec<f64>>, lags: &[u64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(lags.len());
    let mut level = 0;
    for &n in lags {
        if n > level {
            let steps = n - level;
            vectors.par_iter_mut().for_each(|v| {
                for _ in 0..steps {
                    *v = chain.apply(v);
                }
            });
            level = n;
        }
        out.push(vectors.par_iter().map(|v| chain.l1_centered(v)).reduce(|| 0.0, f64::max));
    }
    out
}

fn alpha_one(chain: &DiscreteChain, lags: &[u64], grid: usize) -> Vec<f64> {
    let vectors = chain.quantile_thresholds(grid).iter().map(|x| chain.centered_indicator(*x)).collect();
    sup_centered_l1(chain, vectors, lags)
}

/// `α_{k,Y}(n)` for `k ∈ {1, 2}` from kernel powers. The sup over `x` runs
/// over quantile thresholds of the stationary law (`grid` points for single
/// indices, `pair_grid` per coordinate for pairs); by the `L^1` contraction
/// of `K` the sup over `i_1 >= n` sits at `i_1 = n`, and the gap `i_2 - i_1`
/// ranges over [`PAIR_GAPS`].
pub fn alpha_coefficient(
    chain: &DiscreteChain,
    k: usize,
    lags: &[u64],
    grid: usize,
    pair_grid: usize,
    refine: bool,
) -> Result<AlphaReport> {
    if !(1..=2).contains(&k) {
        return Err(invalid("k", "only k = 1 and k = 2 are supported"));
    }
    if grid < 32 {
        return Err(invalid("x_grid_size", "must be at least 32"));
    }
    let mut values = alpha_one(chain, lags, grid);
    if k == 2 {
        let thresholds = chain.quantile_thresholds(pair_grid);
        let indicators: Vec<Vec<f64>> = thresholds.iter().map(|x| chain.centered_indicator(*x)).collect();
        let mut vectors = Vec::new();
        for &gap in &PAIR_GAPS {
            let shifted: Vec<Vec<f64>> = indicators.iter().map(|g| chain.iterate(gap, g)).collect();
            for g1 in &indicators {
                for g2 in &shifted {
                    vectors.push(g1.iter().zip(g2).map(|(a, b)| a * b).collect());
                }
            }
        }
        let pairs = sup_centered_l1(chain, vectors, lags);
        for (v, p) in values.iter_mut().zip(pairs) {
            *v = v.max(p);
        }
    }
    let name = if k == 1 { "alpha_1" } else { "alpha_2" };
    let mut lag_list = lags.to_vec();
    if lag_list.first() == Some(&0) {
        // α(0) = 1 by convention.
        values[0] = 1.0;
    } else {
        lag_list = lags.to_vec();
    }
    let curve = CoefficientCurve::new(name, lag_list, values.clone(), Estimator::ExactKernel)?;
    let (refined, grid_sensitivity) = if refine {
        let fine = alpha_one(chain, lags, 2 * grid);
        let coarse = alpha_one(chain, lags, grid);
        let sens = fine
            .iter()
            .zip(&coarse)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, c)| (f - c).abs() / f)
            .fold(0.0, f64::max);
        (Some(fine), Some(sens))
    } else {
        (None, None)
    };
    Ok(AlphaReport { curve, refined, grid_sensitivity })
}

/// 1-d Wasserstein distance between the conditional laws of `X_i ± X_j`
/// given `Y_0` and the unconditional law, averaged over `Y_0`: the dual
/// form of the sup over 1-Lipschitz functions.
fn theta_pair(chain: &DiscreteChain, rows_n: &[Vec<f64>], rows_gap: &[Vec<f64>], sign: f64) -> f64 {
    let m = chain.len();
    let f = &chain.observable;
    let mut atoms: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m);
    for s in 0..m {
        for t in 0..m {
            atoms.push((f[t] + sign * f[s], s, t));
        }
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let uncond: Vec<f64> = atoms.iter().map(|(_, s, t)| chain.weights[*s] * rows_gap[*s][*t]).collect();
    (0..m)
        .into_par_iter()
        .map(|y| {
            let mut cum = 0.0;
            let mut w1 = 0.0;
            for k in 0..atoms.len() {
                let (_, s, t) = atoms[k];
                cum += rows_n[y][s] * rows_gap[s][t] - uncond[k];
                if k + 1 < atoms.len() {
                    w1 += cum.abs() * (atoms[k + 1].0 - atoms[k].0);
                }
            }
            chain.weights[y] * w1
        })
        .collect::<Vec<f64>>()
        .iter()
        // Summed in order so the result does not depend on the thread count.
        .sum()
}

/// `θ_2(n)` and `λ_2(n) = max(θ_2(n), γ(n))` on a (small) finite-state chain.
pub fn theta2_lambda2(chain: &DiscreteChain, lags: &[u64]) -> Result<(CoefficientCurve, CoefficientCurve)> {
    if chain.len() > 512 {
        return Err(invalid("chain", "θ_2 needs m^3 work per lag; use at most 512 states"));
    }
    let rows = chain.transition_rows(lags);
    let gap_rows = chain.transition_rows(&PAIR_GAPS);
    let iterates = chain.conditional_iterates(lags);
    let mut theta = Vec::with_capacity(lags.len());
    let mut lambda = Vec::with_capacity(lags.len());
    for (idx, rn) in rows.iter().enumerate() {
        let mut best: f64 = 0.0;
        for rg in &gap_rows {
            for sign in [1.0, -1.0] {
                best = best.max(theta_pair(chain, rn, rg, sign));
            }
        }
        let gamma = chain.lp_norm(&iterates[idx], 1.0);
        theta.push(best);
        lambda.push(best.max(gamma));
    }
    Ok((
        CoefficientCurve::new("theta_2", lags.to_vec(), theta, Estimator::ExactKernel)?,
        CoefficientCurve::new("lambda_2", lags.to_vec(), lambda, Estimator::ExactKernel)?,
    ))
}

/// Upper-bound estimates of `τ_1(n)` and `τ_2(n)` for the ARL family by
/// coupling with shared innovations and an independent stationary restart.
pub fn tau_coupling(spec: &ProcessSpec, lags: &[u64], replicas: usize, root_seed: u64) -> Result<(CoefficientCurve, CoefficientCurve)> {
    let arl = Arl::from_spec(spec)?;
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2"));
    }
    let n_max = 2 * *lags.iter().max().ok_or(SipError::EmptySample)? as usize;
    let dists = map_replicas(root_seed, replicas, |_, seed| arl.coupled_distances(n_max, &mut seed.rng()));
    let column = |k: usize| -> Vec<f64> { dists.iter().map(|d| d[k]).collect() };
    let mut t1 = Vec::new();
    let mut s1 = Vec::new();
    let mut t2 = Vec::new();
    for &n in lags {
        let n = n as usize;
        let d = column(n);
        t1.push(mean(&d));
        s1.push(std_error(&d));
        // Pair functional at sampled pairs i > j >= n.
        let mut best: f64 = 0.0;
        for i in [n + 1, n + 2, 2 * n.max(1)] {
            let pair: Vec<f64> = dists.iter().map(|r| 0.5 * (r[i] + r[n])).collect();
            best = best.max(mean(&pair));
        }
        t2.push(best);
    }
    Ok((
        CoefficientCurve::new("tau_1", lags.to_vec(), t1, Estimator::Coupling)?.with_stderr(s1),
        CoefficientCurve::new("tau_2", lags.to_vec(), t2, Estimator::Coupling)?,
    ))
}

/// `α` coefficients of the independent family vanish after lag 0.
pub fn iid_chain(law: Innovation) -> Result<DiscreteChain> {
    Ok(Iid::new(law)?.discrete_chain(64))
}
