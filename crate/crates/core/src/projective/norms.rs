//! Projective norms of conditional expectations, computed from the kernel
//! (closed forms, quadrature or a finite-state chain) for each family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decomposition::two_step_lp_power;
use crate::dependence::{alpha_coefficient, theta2_lambda2, CoefficientCurve, Estimator};
use crate::error::{invalid, Result, SipError};
use crate::numerics::{integrate, integrate_unit_log};
use crate::processes::circle::Circle;
use crate::processes::dmr::Dmr;
use crate::processes::linear::Linear;
use crate::processes::{DiscreteChain, Innovation, ProcessSpec};

/// Gaps `i - j` scanned for the sup over `i >= j >= n` of pair conditional
/// expectations.
pub const PAIR_SUP_GAPS: [u64; 12] = [0, 1, 2, 3, 4, 6, 8, 16, 32, 64, 128, 256];

/// Sequences that enter the condition series, indexed by the lag `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ingredient {
    /// `‖E(S_n | F_0)‖_p`
    CondSumNorm { p: f64 },
    /// `‖E(S_n² | F_0) - E(S_n²)‖_q`
    CondSquareNorm { q: f64 },
    /// `‖E(M_n² | F_0) - E(M_n²)‖_q`
    MartSquareNorm { q: f64 },
    /// `‖E(X_n | F_0)‖_p`
    CondMeanNorm { p: f64 },
    /// `‖X_0 E(X_n | F_0)‖_q`
    ProductNorm { q: f64 },
    /// `sup_{i >= j >= n} ‖E(X_i X_j | F_0) - E(X_i X_j)‖_q`
    PairSup { q: f64 },
    /// `‖Σ_{j >= n} P_0(X_j)‖_p`
    ProjectionTail { p: f64 },
    Lambda2,
    Alpha2,
}

impl Ingredient {
    pub fn name(&self) -> String {
        match self {
            Ingredient::CondSumNorm { p } => format!("cond_sum_norm(p={p})"),
            Ingredient::CondSquareNorm { q } => format!("cond_square_norm(q={q})"),
            Ingredient::MartSquareNorm { q } => format!("mart_square_norm(q={q})"),
            Ingredient::CondMeanNorm { p } => format!("cond_mean_norm(p={p})"),
            Ingredient::ProductNorm { q } => format!("product_norm(q={q})"),
            Ingredient::PairSup { q } => format!("pair_sup(q={q})"),
            Ingredient::ProjectionTail { p } => format!("projection_tail(p={p})"),
            Ingredient::Lambda2 => "lambda_2".into(),
            Ingredient::Alpha2 => "alpha_2".into(),
        }
    }
}

fn unavailable(ing: &Ingredient, spec: &ProcessSpec) -> SipError {
    SipError::NoKernelOracle(format!("{} for family {}", ing.name(), spec.family()))
}

/// `E|Z|^p` for a standard normal `Z`.
fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// `‖Z² - 1‖_q` for a standard normal `Z`.
fn normal_centered_square_norm(q: f64) -> Result<f64> {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let g = |z: f64| 2.0 * phi(z) * (z * z - 1.0).abs().powf(q);
    let s = integrate(g, 0.0, 1.0, 1e-14, 1e-12)? + integrate(g, 1.0, 40.0, 1e-14, 1e-12)?;
    Ok(s.powf(1.0 / q))
}

fn check_grid(ns: &[u64]) -> Result<()> {
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("n_grid", "must be strictly increasing"));
    }
    Ok(())
}

impl DiscreteChain {
    /// `Σ_{k=0}^{n-1} K^k v` for every `n` in the ascending grid.
    pub fn cumulative_iterates(&self, v: &[f64], grid: &[u64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut acc = vec![0.0; v.len()];
        let mut term = v.to_vec();
        let mut level = 0;
        for &n in grid {
            while level < n {
                acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
                term = self.apply(&term);
                level += 1;
            }
            out.push(acc.clone());
        }
        out
    }

    /// `‖g - E g‖_q` under the stationary weights.
    pub fn centered_lq(&self, g: &[f64], q: f64) -> f64 {
        let m = self.expect(g);
        let s: f64 = self.weights.iter().zip(g).map(|(w, v)| w * (v - m).abs().powf(q)).sum();
        s.powf(1.0 / q)
    }

    /// `max_v ‖K^n v - E v‖_q` over a family of vectors, for each lag.
    fn sup_centered_lq(&self, mut vectors: Vec<Vec<f64>>, lags: &[u64], q: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(lags.len());
        let mut level = 0;
        for &n in lags {
            if n > level {
                let steps = n - level;
                vectors.par_iter_mut().for_each(|v| {
                    for _ in 0..steps {
                        *v = self.apply(v);
                    }
                });
                level = n;
            }
            out.push(vectors.par_iter().map(|v| self.centered_lq(v, q)).reduce(|| 0.0, f64::max));
        }
        out
    }

    /// `sup_{i >= j >= n} ‖E(X_i X_j | Y_0) - E(X_i X_j)‖_q`. By the `L^q`
    /// contraction of `K` the sup over `j` sits at `j = n`; the gap `i - j`
    /// runs over [`PAIR_SUP_GAPS`].
    pub fn pair_sup_norm(&self, lags: &[u64], q: f64) -> Vec<f64> {
        let f = &self.observable;
        let vectors = PAIR_SUP_GAPS
            .iter()
            .map(|g| {
                let kg = self.iterate(*g, f);
                f.iter().zip(&kg).map(|(a, b)| a * b).collect()
            })
            .collect();
        self.sup_centered_lq(vectors, lags, q)
    }
}

/// Chain used for a family when no closed form applies.
fn chain_for(spec: &ProcessSpec) -> Result<DiscreteChain> {
    spec.discrete_chain()
}

/// `‖E(S_n | F_0)‖_p` for each `n`.
pub fn projective_norm_esn(spec: &ProcessSpec, ns: &[u64], p: f64) -> Result<CoefficientCurve> {
    let values = ingredient_values(spec, &Ingredient::CondSumNorm { p }, ns)?;
    CoefficientCurve::new("cond_sum_norm", ns.to_vec(), values, Estimator::ExactKernel)
}

/// `‖E(S_n² | F_0) - E(S_n²)‖_{p/2}` for each `n`.
pub fn projective_norm_esn2(spec: &ProcessSpec, ns: &[u64], p: f64) -> Result<CoefficientCurve> {
    let values = ingredient_values(spec, &Ingredient::CondSquareNorm { q: p / 2.0 }, ns)?;
    CoefficientCurve::new("cond_square_norm", ns.to_vec(), values, Estimator::ExactKernel)
}

/// Values of an ingredient sequence at the lags `ns` (ascending).
pub fn ingredient_values(spec: &ProcessSpec, ing: &Ingredient, ns: &[u64]) -> Result<Vec<f64>> {
    check_grid(ns)?;
    match spec {
        ProcessSpec::Dmr { a, f_exponent } => dmr_values(&Dmr::new(*a, *f_exponent)?, spec, ing, ns),
        ProcessSpec::Circle { frequency, fourier } => circle_values(&Circle::new(*frequency, fourier)?, spec, ing, ns),
        ProcessSpec::Linear { .. } => linear_values(&Linear::from_spec(spec)?, spec, ing, ns),
        ProcessSpec::Iid { .. } => match ing {
            // d_k = X_k, so E(M_n² | F_0) is constant and the projections vanish after lag 0.
            Ingredient::MartSquareNorm { .. } => Ok(vec![0.0; ns.len()]),
            Ingredient::ProjectionTail { .. } if ns.first() != Some(&0) => Ok(vec![0.0; ns.len()]),
            _ => chain_values(&chain_for(spec)?, spec, ing, ns),
        },
        ProcessSpec::Pm { .. } => chain_values(&chain_for(spec)?, spec, ing, ns),
        ProcessSpec::Arl { .. } => Err(unavailable(ing, spec)),
    }
}

fn chain_values(chain: &DiscreteChain, spec: &ProcessSpec, ing: &Ingredient, ns: &[u64]) -> Result<Vec<f64>> {
    Ok(match *ing {
        Ingredient::CondSumNorm { p } => chain.conditional_sums(ns).iter().map(|b| chain.lp_norm(b, p)).collect(),
        Ingredient::CondSquareNorm { q } => {
            chain.conditional_moments(ns).iter().map(|(_, c)| chain.centered_lq(c, q)).collect()
        }
        Ingredient::CondMeanNorm { p } => chain.conditional_iterates(ns).iter().map(|v| chain.lp_norm(v, p)).collect(),
        Ingredient::ProductNorm { q } => {
            let f = &chain.observable;
            chain
                .conditional_iterates(ns)
                .iter()
                .map(|v| {
                    let prod: Vec<f64> = f.iter().zip(v).map(|(a, b)| a * b).collect();
                    chain.lp_norm(&prod, q)
                })
                .collect()
        }
        Ingredient::PairSup { q } => chain.pair_sup_norm(ns, q),
        Ingredient::Alpha2 => alpha_coefficient(chain, 2, ns, 64, 8, false)?.curve.values,
        Ingredient::Lambda2 => theta2_lambda2(chain, ns)?.1.values,
        Ingredient::MartSquareNorm { .. } | Ingredient::ProjectionTail { .. } => return Err(unavailable(ing, spec)),
    })
}

fn dmr_values(d: &Dmr, spec: &ProcessSpec, ing: &Ingredient, ns: &[u64]) -> Result<Vec<f64>> {
    let (a, b) = (d.a, d.beta);
    match *ing {
        Ingredient::CondSumNorm { p } => ns
            .par_iter()
            .map(|n| {
                // E(S_n | Y_0 = x) = g(x)(1 - (1-|x|)^n)
                let n = *n as f64;
                let s = integrate_unit_log(
                    |x| a * x.powf(a - 1.0) * (x.powf(b - 1.0) * (1.0 - x) * (1.0 - (1.0 - x).powf(n))).powf(p),
                    1e-10,
                )?;
                Ok(s.powf(1.0 / p))
            })
            .collect(),
        Ingredient::CondMeanNorm { p } => {
            ns.par_iter().map(|n| Ok(d.conditional_mean_power(*n, p)?.powf(1.0 / p))).collect()
        }
        Ingredient::ProductNorm { q } => ns
            .par_iter()
            .map(|n| {
                let nq = *n as f64 * q;
                let s = integrate_unit_log(|x| a * x.powf(a - 1.0 + 2.0 * b * q) * (1.0 - x).powf(nq), 1e-10)?;
                Ok(s.powf(1.0 / q))
            })
            .collect(),
        Ingredient::MartSquareNorm { q } => {
            let chain = d.discrete_chain(crate::processes::dmr::DEFAULT_PANEL_NODES);
            let v: Vec<f64> = chain.states.iter().map(|y| d.increment_conditional_variance(*y)).collect::<Result<_>>()?;
            Ok(chain.cumulative_iterates(&v, ns).iter().map(|c| chain.centered_lq(c, q)).collect())
        }
        Ingredient::ProjectionTail { p } => {
            // Σ_{j>=m} P_0(X_j) = T_m(Y_0) - T_{m+1}(Y_{-1}) with T_m(y) = (1-|y|)^m f(y)/|y|.
            let chain = d.discrete_chain(crate::processes::dmr::DEFAULT_PANEL_NODES);
            let tail = |m: u64| -> Vec<f64> {
                chain.states.iter().map(|y| (1.0 - y.abs()).powf(m as f64) * d.f(*y) / y.abs()).collect()
            };
            Ok(ns.par_iter().map(|m| two_step_lp_power(&chain, &tail(*m), &tail(m + 1), p).powf(1.0 / p)).collect())
        }
        Ingredient::Lambda2 => chain_values(&d.discrete_chain(4), spec, ing, ns),
        _ => chain_values(&d.discrete_chain(crate::processes::dmr::DEFAULT_PANEL_NODES), spec, ing, ns),
    }
}

fn circle_values(c: &Circle, spec: &ProcessSpec, ing: &Ingredient, ns: &[u64]) -> Result<Vec<f64>> {
    match *ing {
        Ingredient::CondSumNorm { p } => Ok(ns.par_iter().map(|n| c.conditional_sum_norm(*n, p)).collect()),
        Ingredient::CondSquareNorm { q } => ns.par_iter().map(|n| c.conditional_square_norm(*n, q)).collect(),
        Ingredient::CondMeanNorm { p } => Ok(ns.par_iter().map(|n| c.conditional_mean_norm(*n, p)).collect()),
        Ingredient::ProductNorm { q } => Ok(ns.par_iter().map(|n| c.conditional_product_norm(*n, q)).collect()),
        _ => Err(unavailable(ing, spec)),
    }
}

fn linear_values(lin: &Linear, spec: &ProcessSpec, ing: &Ingredient, ns: &[u64]) -> Result<Vec<f64>> {
    let gaussian = matches!(lin.innovation, Innovation::Gaussian { .. });
    let var = lin.innovation.variance().ok_or_else(|| invalid("innovation", "needs finite variance"))?;
    let lp_factor = |p: f64| -> Result<f64> {
        if (p - 2.0).abs() < 1e-15 {
            Ok(1.0)
        } else if gaussian {
            Ok(normal_abs_moment(p).powf(1.0 / p))
        } else {
            Err(unavailable(ing, spec))
        }
    };
    // ‖Σ_j c_j ε_{-j}‖_2² for the weights of each quantity.
    let tail_sq = |n: u64| -> f64 { lin.coefficients.iter().skip(n as usize).map(|a| a * a).sum() };
    match *ing {
        Ingredient::CondSumNorm { p } => {
            let k = lp_factor(p)?;
            Ok(ns.iter().map(|n| k * lin.conditional_sum_l2(*n as usize)).collect())
        }
        Ingredient::CondMeanNorm { p } => {
            let k = lp_factor(p)?;
            Ok(ns.iter().map(|n| k * (var * tail_sq(*n)).sqrt()).collect())
        }
        Ingredient::CondSquareNorm { q } if gaussian => {
            // E(S_n² | F_0) - E(S_n²) = W² - E W² with W = E(S_n | F_0) centered normal.
            let k = normal_centered_square_norm(q)?;
            Ok(ns.iter().map(|n| k * lin.conditional_sum_l2(*n as usize).powi(2)).collect())
        }
        Ingredient::ProjectionTail { p } => {
            // P_0(X_j) = a_j ε_0.
            let eps_norm = if gaussian {
                var.sqrt() * normal_abs_moment(p).powf(1.0 / p)
            } else if (p - 2.0).abs() < 1e-15 {
                var.sqrt()
            } else {
                return Err(unavailable(ing, spec));
            };
            let a = &lin.coefficients;
            let mut suffix = vec![0.0; a.len() + 1];
            for j in (0..a.len()).rev() {
                suffix[j] = suffix[j + 1] + a[j];
            }
            Ok(ns.iter().map(|n| eps_norm * suffix[(*n as usize).min(a.len())].abs()).collect())
        }
        _ => Err(unavailable(ing, spec)),
    }
}
