//! Martingale-coboundary decomposition `S_n = M_n + R_n` built from the
//! projections `P_0(X_i) = E(X_i | F_0) - E(X_i | F_{-1})`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SipError};
use crate::processes::dmr::Dmr;
use crate::processes::{DiscreteChain, KernelOracle, Path, Transition};
use crate::rng::map_replicas;
use crate::stats::loglog_rate_fit;

/// `P_0(X_i)` as a function of `(Y_{-1}, Y_0)`: `K^i f(y_0) - K^{i+1} f(y_{-1})`.
pub fn projection_p0(oracle: &dyn KernelOracle, i: u64, prev: f64, y: f64) -> Result<f64> {
    Ok(oracle.iterate(i, y)? - oracle.iterate(i + 1, prev)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDecomposition {
    /// `d_k` for `k = 1..n`.
    pub d_values: Vec<f64>,
    pub s_partial: Vec<f64>,
    pub m_partial: Vec<f64>,
    /// `S_k - M_k`
    pub r_partial: Vec<f64>,
    pub truncation_n: u64,
    /// Largest bound on the neglected tail along the path, when the oracle
    /// provides one.
    pub truncation_error_bound: Option<f64>,
}

/// `d_k = Σ_{i=0}^{N} [K^i f(y_k) - K^{i+1} f(y_{k-1})]` along a path whose
/// first state is `Y_0`; partial sums run over `k = 1..len-1`.
pub fn build_decomposition(path: &Path, oracle: &dyn KernelOracle, n_trunc: u64, tol: f64) -> Result<MartingaleDecomposition> {
    if path.states.len() < 2 || path.values.len() != path.states.len() {
        return Err(invalid("path", "need at least two states with matching values"));
    }
    let mut bound: Option<f64> = Some(0.0);
    let mut d_values = Vec::with_capacity(path.states.len() - 1);
    for w in path.states.windows(2) {
        let (prev, y) = (w[0], w[1]);
        d_values.push(oracle.iterate_sum(0, n_trunc, y)? - oracle.iterate_sum(1, n_trunc + 1, prev)?);
        bound = match (bound, oracle.tail_bound(n_trunc + 1, y), oracle.tail_bound(n_trunc + 2, prev)) {
            (Some(b), Some(t1), Some(t2)) => Some(b.max(t1 + t2)),
            _ => None,
        };
    }
    if let Some(b) = bound {
        if b > tol {
            return Err(SipError::TruncationInsufficient { bound: b, tol });
        }
    }
    let mut s_partial = Vec::with_capacity(d_values.len());
    let mut m_partial = Vec::with_capacity(d_values.len());
    let mut r_partial = Vec::with_capacity(d_values.len());
    let (mut s, mut m) = (0.0, 0.0);
    for (x, d) in path.values[1..].iter().zip(&d_values) {
        s += x;
        m += d;
        s_partial.push(s);
        m_partial.push(m);
        r_partial.push(s - m);
    }
    Ok(MartingaleDecomposition { d_values, s_partial, m_partial, r_partial, truncation_n: n_trunc, truncation_error_bound: bound })
}

/// `Σ_{i >= from} K^i f(y)`, extending the horizon until the oracle's tail
/// bound drops below `tol`.
fn tail_sum(oracle: &dyn KernelOracle, from: u64, y: f64, tol: f64) -> Result<f64> {
    let mut len = 64u64;
    loop {
        match oracle.tail_bound(from + len + 1, y) {
            Some(b) if b <= tol => return oracle.iterate_sum(from, from + len, y),
            Some(_) if len < 1 << 60 => len *= 2,
            Some(b) => return Err(SipError::TruncationInsufficient { bound: b, tol }),
            None => return Err(SipError::NoKernelOracle("tail sums need a tail bound".into())),
        }
    }
}

/// Residual of the four-term identity for `R_n` along one path `y_0..y_{n+N}`:
/// `R_n - [E(S_n|F_0) - E(S_{n+N}-S_n|F_n) + E(S_{n+N}-S_n|F_0) - Σ_{k<=n} Σ_{j>n+N} P_k(X_j)]`.
pub fn four_term_residual(oracle: &dyn KernelOracle, states: &[f64], n: usize, big_n: u64) -> Result<f64> {
    if states.len() <= n {
        return Err(invalid("path", "needs at least n + 1 states"));
    }
    let tol = 1e-15;
    let n64 = n as u64;
    let mut s = 0.0;
    let mut m = 0.0;
    let mut double_tail = 0.0;
    for k in 1..=n {
        s += oracle.observable(states[k])?;
        m += tail_sum(oracle, 0, states[k], tol)? - tail_sum(oracle, 1, states[k - 1], tol)?;
        let first = n64 + big_n + 1 - k as u64;
        double_tail += tail_sum(oracle, first, states[k], tol)? - tail_sum(oracle, first + 1, states[k - 1], tol)?;
    }
    let r = s - m;
    let y0 = states[0];
    let cond_sn = oracle.iterate_sum(1, n64, y0)?;
    let future_given_n = oracle.iterate_sum(1, big_n, states[n])?;
    let future_given_0 = oracle.iterate_sum(n64 + 1, n64 + big_n, y0)?;
    Ok(r - (cond_sn - future_given_n + future_given_0 - double_tail))
}

/// Largest four-term residual over `paths` simulated DMR paths.
pub fn verify_four_term_identity(dmr: &Dmr, n: usize, big_n: u64, paths: usize, root_seed: u64) -> Result<f64> {
    let residuals = map_replicas(root_seed, paths, |_, seed| {
        let path = dmr.sample_path(n + 1, &mut seed.rng());
        four_term_residual(dmr, &path.states, n, big_n)
    });
    residuals.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?.abs())))
}

/// `‖a(Y_0) - b(Y_{-1})‖_p^p` under the stationary two-step law of the chain.
pub fn two_step_lp_power(chain: &DiscreteChain, at_current: &[f64], at_prev: &[f64], p: f64) -> f64 {
    let w = &chain.weights;
    match &chain.transition {
        Transition::RankOne { stay, jump, target } => (0..chain.len())
            .map(|y| {
                let moved: f64 = target.iter().zip(at_current).map(|(t, a)| t * (a - at_prev[y]).abs().powf(p)).sum();
                w[y] * (stay[y] * (at_current[y] - at_prev[y]).abs().powf(p) + jump[y] * moved)
            })
            .sum(),
        Transition::Sparse(k) => (0..chain.len())
            .map(|y| w[y] * k.row(y).map(|(z, q)| q * (at_current[z] - at_prev[y]).abs().powf(p)).sum::<f64>())
            .sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTailReport {
    pub n_grid: Vec<u64>,
    /// `Σ_{k >= 2n} ‖P_0(X_k)‖_p^q`
    pub left: Vec<f64>,
    /// `Σ_{k >= n} ‖E(X_k | F_0)‖_p^q / k^{q/p}`
    pub right: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Log-log slope of the ratio against `n`.
    pub trend_slope: Option<f64>,
}

/// Terms summed exactly up to this lag; beyond it on a log grid.
const EXACT_TERMS: u64 = 1024;
const LOG_GRID_END: u64 = 1 << 16;
const LOG_GRID_STEPS_PER_OCTAVE: u32 = 4;

/// `Σ_{k >= from}` of a positive sequence given exactly on `1..=EXACT_TERMS`
/// and on the log grid above; the log-grid part integrates the log-linear
/// interpolant and the tail beyond the grid continues the last power law.
fn tail_series(exact: &[f64], grid: &[(f64, f64)], from: u64) -> f64 {
    let mut s: f64 = exact[(from as usize - 1).min(exact.len())..].iter().sum();
    // Half-term shift between the exact block and the integral.
    let mut prev = (EXACT_TERMS as f64 + 0.5, *exact.last().unwrap_or(&0.0));
    for &(k, t) in grid {
        if prev.1 > 0.0 && t > 0.0 {
            let e = (t / prev.1).ln() / (k / prev.0).ln();
            s += if (e + 1.0).abs() < 1e-12 {
                prev.1 * prev.0 * (k / prev.0).ln()
            } else {
                prev.1 * prev.0 * ((k / prev.0).powf(e + 1.0) - 1.0) / (e + 1.0)
            };
        } else {
            s += 0.5 * (prev.1 + t) * (k - prev.0);
        }
        prev = (k, t);
    }
    if grid.len() >= 2 {
        let (k0, t0) = grid[grid.len() - 2];
        let (k1, t1) = grid[grid.len() - 1];
        if t0 > 0.0 && t1 > 0.0 {
            let e = (t1 / t0).ln() / (k1 / k0).ln();
            if e < -1.0 {
                s += t1 * k1 / (-1.0 - e);
            }
        }
    }
    s
}

/// Left and right sides of the bound `Σ_{k>=2n} ‖P_0(X_k)‖_p^q ≪ Σ_{k>=n} ‖E(X_k|F_0)‖_p^q / k^{q/p}`
/// on a discretized chain.
pub fn verify_projection_tail(chain: &DiscreteChain, n_grid: &[u64], p: f64, q: f64) -> Result<ProjectionTailReport> {
    if !(p >= 1.0 && q > 0.0) {
        return Err(invalid("p", "need p >= 1 and q > 0"));
    }
    if n_grid.is_empty() || n_grid.iter().any(|n| *n == 0 || 2 * n > EXACT_TERMS) {
        return Err(invalid("n_grid", format!("lags must lie in 1..={}", EXACT_TERMS / 2)));
    }
    // Iterates K^k f for k = 0..=EXACT_TERMS+1, then on the log grid.
    let mut ks: Vec<u64> = (1..=EXACT_TERMS).collect();
    let mut j = 1u32;
    loop {
        let k = (EXACT_TERMS as f64 * 2f64.powf(j as f64 / LOG_GRID_STEPS_PER_OCTAVE as f64)).round() as u64;
        if k > LOG_GRID_END {
            break;
        }
        if k > *ks.last().unwrap() {
            ks.push(k);
        }
        j += 1;
    }
    let mut needed: Vec<u64> = ks.iter().flat_map(|k| [*k, k + 1]).collect();
    needed.push(0);
    needed.sort_unstable();
    needed.dedup();
    let iterates = chain.conditional_iterates(&needed);
    let at = |k: u64| &iterates[needed.binary_search(&k).unwrap()];
    let proj: Vec<f64> = ks.par_iter().map(|k| two_step_lp_power(chain, at(*k), at(k + 1), p).powf(q / p)).collect();
    let cond: Vec<f64> = ks.iter().map(|k| chain.lp_norm(at(*k), p).powf(q) / (*k as f64).powf(q / p)).collect();
    let e = EXACT_TERMS as usize;
    let split = |v: &[f64]| -> (Vec<f64>, Vec<(f64, f64)>) {
        (v[..e].to_vec(), ks[e..].iter().zip(&v[e..]).map(|(k, t)| (*k as f64, *t)).collect())
    };
    let (proj_exact, proj_grid) = split(&proj);
    let (cond_exact, cond_grid) = split(&cond);
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut ratios = Vec::new();
    for &n in n_grid {
        let l = tail_series(&proj_exact, &proj_grid, 2 * n);
        let r = tail_series(&cond_exact, &cond_grid, n);
        left.push(l);
        right.push(r);
        ratios.push(if r > 0.0 { l / r } else { 0.0 });
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let positive: Vec<(f64, f64)> = n_grid.iter().zip(&ratios).filter(|(_, r)| **r > 0.0).map(|(n, r)| (*n as f64, *r)).collect();
    let trend_slope = if positive.len() >= 3 {
        let (ns, rs): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        Some(loglog_rate_fit(&ns, &rs)?.slope)
    } else {
        None
    };
    Ok(ProjectionTailReport { n_grid: n_grid.to_vec(), left, right, ratios, max_ratio, trend_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::circle::{Circle, FourierSpec};
    use crate::processes::iid::Iid;
    use crate::processes::Innovation;
    use crate::numtheory::FrequencyId;
    use crate::rng::SeedStream;
    use crate::stats::mean;
    use approx::assert_relative_eq;

    fn assert_sum_exact(s: f64, m: f64, r: f64) {
        // R is stored as S - M, so M + R reproduces S up to one rounding.
        assert!((s - (m + r)).abs() <= 2.0 * f64::EPSILON * s.abs().max(m.abs()), "{s} {m} {r}");
    }

    #[test]
    fn dmr_projection_closed_form() {
        let d = Dmr::new(1.0, 0.5).unwrap();
        let mut rng = SeedStream::new(5, 0).rng();
        for _ in 0..100 {
            let (prev, y) = (d.sample_stationary(&mut rng), d.sample_stationary(&mut rng));
            for i in [0u64, 1, 7] {
                let expect = (1.0 - y.abs()).powi(i as i32) * d.f(y) - (1.0 - prev.abs()).powi(i as i32 + 1) * d.f(prev);
                assert_relative_eq!(projection_p0(&d, i, prev, y).unwrap(), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dmr_truncated_increment_matches_closed_form() {
        let d = Dmr::new(1.0, 0.5).unwrap();
        let mut rng = SeedStream::new(6, 0).rng();
        for _ in 0..1000 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| loop {
                let x = d.sample_stationary(rng);
                if x.abs() >= 0.025 {
                    return x;
                }
            };
            let (prev, y) = (draw(&mut rng), draw(&mut rng));
            let truncated: f64 = (1..=1000).map(|i| projection_p0(&d, i - 1, prev, y).unwrap()).sum();
            assert!((truncated - d.martingale_increment(prev, y).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn decomposition_on_dmr_path() {
        let d = Dmr::new(1.0, 0.5).unwrap();
        let path = d.sample_path(2000, &mut SeedStream::new(7, 0).rng());
        let dec = build_decomposition(&path, &d, 1 << 40, 1e-6).unwrap();
        for (k, w) in path.states.windows(2).enumerate() {
            let exact = d.martingale_increment(w[0], w[1]).unwrap();
            assert!((dec.d_values[k] - exact).abs() < 1e-8 * (1.0 + exact.abs()));
        }
        for k in 0..dec.s_partial.len() {
            assert_sum_exact(dec.s_partial[k], dec.m_partial[k], dec.r_partial[k]);
            let r = d.remainder(path.states[0], path.states[k + 1]).unwrap();
            assert!((dec.r_partial[k] - r).abs() < 1e-7 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn short_truncation_is_rejected() {
        let d = Dmr::new(1.0, 0.5).unwrap();
        let path = Path { states: vec![0.001, 0.001], values: vec![d.f(0.001); 2] };
        assert!(matches!(build_decomposition(&path, &d, 10, 1e-8), Err(SipError::TruncationInsufficient { .. })));
    }

    #[test]
    fn iid_decomposition_is_trivial() {
        let iid = Iid::new(Innovation::Gaussian { sd: 1.0 }).unwrap();
        let path = iid.sample_path(100, &mut SeedStream::new(8, 0).rng());
        let dec = build_decomposition(&path, &iid, 5, 1e-12).unwrap();
        assert_eq!(&dec.d_values[..], &path.values[1..]);
        assert!(dec.r_partial.iter().all(|r| *r == 0.0));
        assert_eq!(four_term_residual(&iid, &path.states, 10, 20).unwrap(), 0.0);
    }

    #[test]
    fn circle_single_mode_telescopes() {
        let c = Circle::new(FrequencyId::Golden, &FourierSpec::SingleMode { amplitude: 1.0 }).unwrap();
        let path = c.sample_path(500, &mut SeedStream::new(9, 0).rng()).unwrap();
        let dec = build_decomposition(&path, &c, 4000, 1e-10).unwrap();
        let ct = FrequencyId::Golden.build().unwrap().cos_mul(1).unwrap();
        // Σ_i c^i f = f / (1 - c), so R_n = c (f(y_0) - f(y_n)) / (1 - c).
        for k in [0usize, 10, 498] {
            let r = ct * (c.eval(path.states[0]) - c.eval(path.states[k + 1])) / (1.0 - ct);
            assert_relative_eq!(dec.r_partial[k], r, epsilon = 1e-9);
            assert_sum_exact(dec.s_partial[k], dec.m_partial[k], dec.r_partial[k]);
        }
    }

    #[test]
    fn martingale_increments_are_conditionally_centered() {
        let d = Dmr::new(1.0, 0.5).unwrap();
        let mut rng = SeedStream::new(10, 0).rng();
        for prev in [-0.7, -0.2, 0.05, 0.5, 0.9] {
            let law = d.increment_law(prev).unwrap();
            let xs: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
            let se = (law.variance() / xs.len() as f64).sqrt();
            assert!(mean(&xs).abs() < 3.0 * se, "{prev}");
        }
    }

    #[test]
    fn four_term_identity_on_dmr() {
        let d = Dmr::new(1.0, 0.5).unwrap();
        let worst = verify_four_term_identity(&d, 10, 20, 1000, 12).unwrap();
        assert!(worst < 1e-8, "{worst}");
        for big_n in [1u64, 5, 100] {
            assert!(verify_four_term_identity(&d, 10, big_n, 100, 13).unwrap() < 1e-8);
        }
    }

    #[test]
    fn projection_tail_ratio_is_flat_for_dmr() {
        let chain = Dmr::new(1.0, 0.5).unwrap().discrete_chain(16);
        let grid: Vec<u64> = (1..=8).map(|j| 1u64 << j).collect();
        let rep = verify_projection_tail(&chain, &grid, 3.0, 1.0).unwrap();
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        assert!(rep.trend_slope.unwrap().abs() < 0.1, "{:?}", rep);
        let rep = verify_projection_tail(&chain, &grid, 3.0, 3.0).unwrap();
        assert!(rep.trend_slope.unwrap().abs() < 0.2, "{:?}", rep.ratios);
    }

    #[test]
    fn projection_tail_iid_left_side_vanishes() {
        let chain = Iid::new(Innovation::Rademacher).unwrap().discrete_chain(2);
        let rep = verify_projection_tail(&chain, &[2, 4, 8], 3.0, 1.0).unwrap();
        assert!(rep.left.iter().all(|l| *l == 0.0));
        assert!(rep.ratios.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn tail_series_matches_exact_power_sum() {
        let exact: Vec<f64> = (1..=EXACT_TERMS).map(|k| (k as f64).powf(-1.5)).collect();
        let grid: Vec<(f64, f64)> = (1..=40).map(|j| {
            let k = EXACT_TERMS as f64 * 2f64.powf(j as f64 / 4.0);
            (k, k.powf(-1.5))
        }).collect();
        // ζ(1.5) - Σ_{k<100} k^{-1.5}
        let head: f64 = (1..100).map(|k| (k as f64).powf(-1.5)).sum();
        assert_relative_eq!(tail_series(&exact, &grid, 100), 2.612_375_348_685_488 - head, max_relative = 1e-3);
    }
}
