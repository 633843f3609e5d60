//! The chain with kernel `Q(x, ·) = (1-|x|) δ_x + |x| υ`, where `υ` has
//! density `(a+1)|t|^a / 2` on `[-1, 1]` and the stationary law `π` has
//! density `(a/2)|x|^{a-1}`.

use rand::Rng;

use super::{DiscreteChain, KernelOracle, Path, Transition};
use crate::error::{invalid, Result, SipError};
use crate::numerics::{gauss_legendre, integrate_unit_log};
use crate::rng::{open_unit, random_sign};
use crate::stats::Cdf;

/// Gauss-Legendre nodes per half-decade panel of the discretized chain.
pub const DEFAULT_PANEL_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dmr {
    pub a: f64,
    /// Observable `f(x) = sign(x) |x|^beta`.
    pub beta: f64,
}

impl Dmr {
    pub fn new(a: f64, beta: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {a}")));
        }
        if !(0.5..=1.0).contains(&beta) {
            return Err(invalid("f_exponent", format!("must lie in [1/2, 1], got {beta}")));
        }
        Ok(Dmr { a, beta })
    }

    pub fn f(&self, x: f64) -> f64 {
        x.signum() * x.abs().powf(self.beta)
    }

    /// `f(x)(1-|x|)/|x|`, the function whose increments form the remainder.
    pub fn g(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(SipError::StateAtAtom);
        }
        Ok(self.f(x) * (1.0 - x.abs()) / x.abs())
    }

    /// `f(x)/|x|`
    fn f_over(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(SipError::StateAtAtom);
        }
        Ok(self.f(x) / x.abs())
    }

    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let m = open_unit(rng).powf(1.0 / self.a);
            if m > 0.0 {
                return random_sign(rng) * m;
            }
        }
    }

    pub fn sample_refresh<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let m = open_unit(rng).powf(1.0 / (self.a + 1.0));
            if m > 0.0 {
                return random_sign(rng) * m;
            }
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        if rng.random::<f64>() < x.abs() {
            self.sample_refresh(rng)
        } else {
            x
        }
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Path {
        let mut states = Vec::with_capacity(n);
        let mut x = self.sample_stationary(rng);
        for k in 0..n {
            if k > 0 {
                x = self.step(x, rng);
            }
            states.push(x);
        }
        let values = states.iter().map(|x| self.f(*x)).collect();
        Path { states, values }
    }

    /// Martingale increment `f(y)/|y| - f(y_prev)/|y_prev| + f(y_prev)`.
    pub fn martingale_increment(&self, prev: f64, y: f64) -> Result<f64> {
        Ok(self.f_over(y)? - self.f_over(prev)? + self.f(prev))
    }

    /// `S_n - M_n = g(y_0) - g(y_n)`.
    pub fn remainder(&self, y0: f64, yn: f64) -> Result<f64> {
        Ok(self.g(y0)? - self.g(yn)?)
    }

    /// `E(S_n | Y_0 = x) = f(x)(1-|x|)(1-(1-|x|)^n)/|x|`.
    pub fn conditional_sum(&self, n: u64, x: f64) -> Result<f64> {
        let stay = 1.0 - x.abs();
        Ok(self.g(x)? * (1.0 - stay.powf(n as f64)))
    }

    /// `‖E(X_n | Y_0)‖_p^p` by quadrature against `π`.
    pub fn conditional_mean_power(&self, n: u64, p: f64) -> Result<f64> {
        let a = self.a;
        let e = self.beta * p + a - 1.0;
        let np = n as f64 * p;
        integrate_unit_log(|x| a * x.powf(e) * (1.0 - x).powf(np), 1e-10)
    }

    /// `E(W²)` for `W = f(ζ)/|ζ|`, `ζ ~ υ`.
    pub fn refresh_ratio_second_moment(&self) -> f64 {
        (self.a + 1.0) / (self.a + 2.0 * self.beta - 1.0)
    }

    /// `E(d² | Y_{-1} = y)`.
    pub fn increment_conditional_variance(&self, y: f64) -> Result<f64> {
        let s = y.abs();
        let g = self.g(y)?;
        Ok((1.0 - s) * self.f(y).powi(2) + s * (self.refresh_ratio_second_moment() + g * g))
    }

    /// Law of `W = f(ζ)/|ζ|` with `ζ ~ υ`.
    fn refresh_ratio_cdf(&self, w: f64, left: bool) -> f64 {
        if self.beta == 1.0 {
            // Two atoms at ±1.
            let below = |t: f64| if left { w > t } else { w >= t };
            return 0.5 * (below(-1.0) as u8 as f64) + 0.5 * (below(1.0) as u8 as f64);
        }
        let kappa = (self.a + 1.0) / (1.0 - self.beta);
        if w >= 1.0 {
            1.0 - 0.5 * w.powf(-kappa)
        } else if w > -1.0 {
            0.5
        } else {
            0.5 * (-w).powf(-kappa)
        }
    }

    /// Conditional law of the martingale increment given the previous state.
    pub fn increment_law(&self, prev: f64) -> Result<IncrementLaw> {
        if prev == 0.0 {
            return Err(SipError::StateAtAtom);
        }
        Ok(IncrementLaw { chain: *self, stay: 1.0 - prev.abs(), atom: self.f(prev), shift: self.g(prev)? })
    }

    /// Nyström discretization on log-spaced Gauss-Legendre panels in `|x|`
    /// from `1e-8` to 1, both signs. The refresh weights are the quadrature
    /// weights of `υ` and the stationary weights `∝ υ_j / |x_j|`, which makes
    /// the discrete chain exactly stationary.
    pub fn discrete_chain(&self, nodes_per_panel: usize) -> DiscreteChain {
        let (gx, gw) = gauss_legendre(nodes_per_panel);
        let mut mags = Vec::new();
        let mut ups = Vec::new();
        for k in 0..16 {
            let lo = 10f64.powf(-8.0 + 0.5 * k as f64);
            let hi = 10f64.powf(-8.0 + 0.5 * (k + 1) as f64);
            for (x, w) in gx.iter().zip(&gw) {
                let t = lo + (hi - lo) * 0.5 * (x + 1.0);
                mags.push(t);
                ups.push(0.5 * (hi - lo) * w * (self.a + 1.0) * t.powf(self.a) / 2.0);
            }
        }
        let mut states = Vec::with_capacity(2 * mags.len());
        let mut target = Vec::with_capacity(2 * mags.len());
        for (m, u) in mags.iter().zip(&ups).rev() {
            states.push(-m);
            target.push(*u);
        }
        for (m, u) in mags.iter().zip(&ups) {
            states.push(*m);
            target.push(*u);
        }
        let total: f64 = target.iter().sum();
        target.iter_mut().for_each(|t| *t /= total);
        let raw: Vec<f64> = states.iter().zip(&target).map(|(x, u)| u / x.abs()).collect();
        let theta: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|r| r / theta).collect();
        let stay: Vec<f64> = states.iter().map(|x| 1.0 - x.abs()).collect();
        let jump: Vec<f64> = states.iter().map(|x| x.abs()).collect();
        let observable = states.iter().map(|x| self.f(*x)).collect();
        DiscreteChain { states, weights, transition: Transition::RankOne { stay, jump, target }, observable }
    }
}

impl KernelOracle for Dmr {
    fn observable(&self, y: f64) -> Result<f64> {
        Ok(self.f(y))
    }

    fn iterate(&self, n: u64, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Err(SipError::StateAtAtom);
        }
        Ok((1.0 - y.abs()).powf(n as f64) * self.f(y))
    }

    fn iterate_sum(&self, from: u64, to: u64, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Err(SipError::StateAtAtom);
        }
        let s = 1.0 - y.abs();
        Ok(self.f(y) * (s.powf(from as f64) - s.powf(to as f64 + 1.0)) / y.abs())
    }

    fn tail_bound(&self, n: u64, y: f64) -> Option<f64> {
        (y != 0.0).then(|| (1.0 - y.abs()).powf(n as f64) * self.f(y).abs() / y.abs())
    }
}

/// Mixture law of `d` given `Y_{-1} = y`: an atom at `f(y)` of mass `1-|y|`
/// and, with mass `|y|`, the law of `W - g(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementLaw {
    chain: Dmr,
    pub stay: f64,
    pub atom: f64,
    pub shift: f64,
}

impl IncrementLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.stay {
            self.atom
        } else {
            let z = self.chain.sample_refresh(rng);
            self.chain.f(z) / z.abs() - self.shift
        }
    }

    /// Atoms `(location, mass)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(self.atom, self.stay)];
        if self.chain.beta == 1.0 {
            let j = 1.0 - self.stay;
            out.push((1.0 - self.shift, 0.5 * j));
            out.push((-1.0 - self.shift, 0.5 * j));
        }
        out
    }

    pub fn variance(&self) -> f64 {
        let j = 1.0 - self.stay;
        self.stay * self.atom * self.atom + j * (self.chain.refresh_ratio_second_moment() + self.shift * self.shift)
    }
}

impl Cdf for IncrementLaw {
    fn cdf(&self, x: f64) -> f64 {
        let atom = if x >= self.atom { self.stay } else { 0.0 };
        atom + (1.0 - self.stay) * self.chain.refresh_ratio_cdf(x + self.shift, false)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        let atom = if x > self.atom { self.stay } else { 0.0 };
        atom + (1.0 - self.stay) * self.chain.refresh_ratio_cdf(x + self.shift, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::beta;
    use crate::rng::SeedStream;
    use crate::stats::{loglog_rate_fit, mean, std_error};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain() -> Dmr {
        Dmr::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn stationary_law_is_uniform_for_a_one() {
        let mut rng = SeedStream::new(3, 0).rng();
        let c = chain();
        let xs: Vec<f64> = (0..20_000).map(|_| c.sample_stationary(&mut rng)).collect();
        let d = crate::stats::ks_distance(
            &crate::stats::EmpiricalDist::new(xs).unwrap(),
            &|x: f64| ((x + 1.0) / 2.0).clamp(0.0, 1.0),
        );
        assert!(d < crate::stats::ks_critical(20_000, 0.01));
    }

    #[test]
    fn conditional_mean_power_matches_beta() {
        for &(a, p) in &[(1.0, 3.0), (2.0, 4.0), (0.5, 1.0)] {
            let c = Dmr::new(a, 0.5).unwrap();
            for n in [8u64, 100, 1 << 14] {
                let q = c.conditional_mean_power(n, p).unwrap();
                let b = a * beta(a + p / 2.0, n as f64 * p + 1.0);
                assert_relative_eq!(q, b, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn conditional_mean_rate() {
        let c = Dmr::new(1.0, 0.5).unwrap();
        let ns: Vec<f64> = (3..=14).map(|j| (1u64 << j) as f64).collect();
        let ys: Vec<f64> = ns.iter().map(|n| c.conditional_mean_power(*n as u64, 3.0).unwrap()).collect();
        let fit = loglog_rate_fit(&ns, &ys).unwrap();
        assert!((fit.slope + 2.5).abs() < 0.1, "{}", fit.slope);
    }

    #[test]
    fn monte_carlo_matches_kernel_in_bins() {
        let c = chain();
        for n in [1u64, 5, 25] {
            let results: Vec<(f64, f64)> = (0..40_000u64)
                .map(|i| {
                    let mut rng = SeedStream::new(17, i).rng();
                    let x0 = c.sample_stationary(&mut rng);
                    let mut x = x0;
                    for _ in 0..n {
                        x = c.step(x, &mut rng);
                    }
                    (x0, c.f(x))
                })
                .collect();
            for (lo, hi) in [(0.1, 0.3), (0.5, 0.7), (-0.9, -0.6)] {
                let sample: Vec<f64> = results.iter().filter(|(x0, _)| *x0 >= lo && *x0 < hi).map(|(_, v)| *v).collect();
                let exact: Vec<f64> = results
                    .iter()
                    .filter(|(x0, _)| *x0 >= lo && *x0 < hi)
                    .map(|(x0, _)| c.iterate(n, *x0).unwrap())
                    .collect();
                let diff = mean(&sample) - mean(&exact);
                assert!(diff.abs() < 3.0 * std_error(&sample) + 1e-3, "n={n} bin=({lo},{hi}) diff {diff}");
            }
        }
    }

    #[test]
    fn truncated_projection_sum_matches_closed_form() {
        let c = chain();
        let mut rng = SeedStream::new(5, 0).rng();
        for _ in 0..1000 {
            let y0 = loop {
                let y = c.sample_stationary(&mut rng);
                if y.abs() >= 0.025 {
                    break y;
                }
            };
            let y1 = loop {
                let y = c.step(y0, &mut rng);
                if y.abs() >= 0.025 {
                    break y;
                }
            };
            let truncated = c.iterate_sum(0, 1000, y1).unwrap() - c.iterate_sum(1, 1001, y0).unwrap();
            let closed = c.martingale_increment(y0, y1).unwrap();
            assert!((truncated - closed).abs() < 1e-8);
        }
    }

    #[test]
    fn sum_equals_martingale_plus_remainder() {
        let c = chain();
        let path = c.sample_path(5000, &mut SeedStream::new(9, 0).rng());
        let (mut s, mut m) = (0.0, 0.0);
        for k in 1..path.states.len() {
            s += path.values[k];
            m += c.martingale_increment(path.states[k - 1], path.states[k]).unwrap();
            let r = c.remainder(path.states[0], path.states[k]).unwrap();
            assert!((s - m - r).abs() < 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn increment_law_is_centered_with_stated_variance() {
        let c = chain();
        for y in [-0.8, -0.05, 0.3, 0.9] {
            let law = c.increment_law(y).unwrap();
            let mut rng = SeedStream::new(21, 0).rng();
            let xs: Vec<f64> = (0..200_000).map(|_| law.sample(&mut rng)).collect();
            assert!(mean(&xs).abs() < 4.0 * std_error(&xs));
            assert_relative_eq!(law.variance(), c.increment_conditional_variance(y).unwrap(), epsilon = 1e-12);
            let v: f64 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            assert!((v - law.variance()).abs() < 0.05 * law.variance(), "{v} vs {}", law.variance());
            assert_relative_eq!(law.cdf(law.atom) - law.cdf_left(law.atom), law.stay, epsilon = 1e-12);
        }
    }

    #[test]
    fn discrete_chain_is_stationary_and_accurate() {
        let c = chain();
        let dc = c.discrete_chain(DEFAULT_PANEL_NODES);
        assert!(dc.stationarity_defect() < 1e-13);
        assert_relative_eq!(dc.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // γ(n) = ∫ (1-|x|)^n |f| dπ = a B(a + 1/2, n + 1)
        for n in [1u64, 16, 256] {
            let k = dc.iterate(n, &dc.observable);
            let l1: f64 = dc.weights.iter().zip(&k).map(|(w, v)| w * v.abs()).sum();
            assert_relative_eq!(l1, beta(1.5, n as f64 + 1.0), max_relative = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn conditional_increment_mean_zero(y in prop::num::f64::NORMAL.prop_map(|v| v.abs().fract() * 1.98 - 0.99).prop_filter("nonzero", |y| y.abs() > 1e-3)) {
            // E(d | y) = (1-|y|) f(y) + |y| (E W - g(y)) with E W = 0.
            let c = chain();
            let law = c.increment_law(y).unwrap();
            let m = law.stay * law.atom - (1.0 - law.stay) * law.shift;
            prop_assert!(m.abs() < 1e-12);
        }
    }
}
