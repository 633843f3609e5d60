//! Upper-tail quantile function `Q`, its integral `H` and the inverse `G`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SipError};
use crate::stats::EmpiricalDist;

/// `Q(u) = inf{t >= 0 : P(|X| > t) <= u}` on `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantileFunction {
    /// `Q(u) = scale * u^(-1/r)`, i.e. `P(|X| > t) = (t/scale)^(-r)` above `scale`.
    Pareto { r: f64, scale: f64 },
    Constant { c: f64 },
    /// Magnitudes sorted in decreasing order.
    Empirical { magnitudes: Vec<f64> },
}

impl QuantileFunction {
    pub fn pareto(r: f64, scale: f64) -> Result<Self> {
        if !(r > 0.0) || !(scale > 0.0) || !r.is_finite() || !scale.is_finite() {
            return Err(invalid("r", format!("pareto needs r > 0 and scale > 0, got r = {r}, scale = {scale}")));
        }
        Ok(Self::Pareto { r, scale })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(invalid("c", format!("must be finite and >= 0, got {c}")));
        }
        Ok(Self::Constant { c })
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Pareto { r, scale } => {
                if u <= 0.0 {
                    f64::INFINITY
                } else {
                    scale * u.min(1.0).powf(-1.0 / r)
                }
            }
            Self::Constant { c } => {
                if u <= 1.0 {
                    *c
                } else {
                    0.0
                }
            }
            Self::Empirical { magnitudes } => {
                let n = magnitudes.len();
                if u >= 1.0 {
                    return 0.0;
                }
                let j = ((n as f64 * u).floor().max(0.0) as usize).min(n - 1);
                magnitudes[j]
            }
        }
    }
}

/// Empirical upper-tail quantile: a step function with one step of width
/// `1/n` per sample point, at height equal to the magnitudes in decreasing order.
pub fn quantile_from_sample(d: &EmpiricalDist) -> QuantileFunction {
    let mut magnitudes: Vec<f64> = d.sorted_values().iter().map(|v| v.abs()).collect();
    magnitudes.sort_by(|a, b| b.total_cmp(a));
    QuantileFunction::Empirical { magnitudes }
}

/// `H(x) = ∫_0^x Q(u) du` together with its inverse `G` on `[0, E|X|]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HGPair {
    quantile: QuantileFunction,
    total_mass: f64,
    /// Prefix sums `Σ_{j<i} m_j / n` for the empirical case.
    prefix: Vec<f64>,
    tol: f64,
}

#[allow(non_snake_case)]
pub fn build_HG(q: &QuantileFunction, tol: f64) -> Result<HGPair> {
    HGPair::new(q, tol)
}

impl HGPair {
    pub fn new(q: &QuantileFunction, tol: f64) -> Result<Self> {
        let (total_mass, prefix) = match q {
            QuantileFunction::Pareto { r, scale } => {
                if *r <= 1.0 {
                    return Err(SipError::NotIntegrable(format!("pareto tail exponent r = {r} <= 1")));
                }
                (scale * r / (r - 1.0), Vec::new())
            }
            QuantileFunction::Constant { c } => (*c, Vec::new()),
            QuantileFunction::Empirical { magnitudes } => {
                let n = magnitudes.len() as f64;
                let mut prefix = Vec::with_capacity(magnitudes.len() + 1);
                let mut acc = 0.0;
                prefix.push(0.0);
                for m in magnitudes {
                    acc += m / n;
                    prefix.push(acc);
                }
                (acc, prefix)
            }
        };
        Ok(Self { quantile: q.clone(), total_mass, prefix, tol })
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn quantile(&self) -> &QuantileFunction {
        &self.quantile
    }

    /// `H(x)` for `x` in `[0, 1]` (clamped).
    pub fn h(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.quantile {
            QuantileFunction::Pareto { r, scale } => {
                let e = 1.0 - 1.0 / r;
                scale * x.powf(e) / e
            }
            QuantileFunction::Constant { c } => c * x,
            QuantileFunction::Empirical { magnitudes } => {
                let n = magnitudes.len();
                let k = ((n as f64 * x).floor() as usize).min(n);
                if k == n {
                    return self.total_mass;
                }
                self.prefix[k] + (x - k as f64 / n as f64) * magnitudes[k]
            }
        }
    }

    /// `G(u)`, the smallest `x` with `H(x) = u`, for `u` in `[0, E|X|]` (clamped).
    pub fn g(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, self.total_mass);
        match &self.quantile {
            QuantileFunction::Pareto { r, scale } => {
                let e = 1.0 - 1.0 / r;
                (u * e / scale).powf(1.0 / e).min(1.0)
            }
            QuantileFunction::Constant { c } => {
                if *c == 0.0 {
                    0.0
                } else {
                    u / c
                }
            }
            QuantileFunction::Empirical { magnitudes } => {
                let n = magnitudes.len();
                // First step whose cumulative mass reaches u.
                let j = self.prefix.partition_point(|&s| s < u);
                if j == 0 {
                    return 0.0;
                }
                let step = j - 1;
                let m = magnitudes[step];
                if m == 0.0 {
                    return step as f64 / n as f64;
                }
                let x = step as f64 / n as f64 + (u - self.prefix[step]) / m;
                x.min(j as f64 / n as f64)
            }
        }
    }

    /// Inverse of `H` by monotone bisection; agrees with [`HGPair::g`] to `tol`.
    pub fn g_by_bisection(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, self.total_mass);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > self.tol {
            let mid = 0.5 * (lo + hi);
            if self.h(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMode {
    /// `∫_0^λ Q^p(u) du`
    QpOfU,
    /// `∫_0^λ Q^{p-1}(G(v)) dv`
    Qpm1CircG,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionIntegral {
    pub value: f64,
    /// The upper limit exceeded the domain and was clamped.
    pub clamped: bool,
}

/// Evaluates the quantile integrals appearing in the moment conditions.
pub fn condition_integral(
    q: &QuantileFunction,
    hg: &HGPair,
    lambda: f64,
    p: f64,
    mode: IntegralMode,
) -> Result<ConditionIntegral> {
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", format!("must be >= 0, got {lambda}")));
    }
    if !(p >= 1.0) {
        return Err(invalid("p", format!("must be >= 1, got {p}")));
    }
    let limit = match mode {
        IntegralMode::QpOfU => 1.0,
        IntegralMode::Qpm1CircG => hg.total_mass(),
    };
    let clamped = lambda > limit;
    let lambda = lambda.min(limit);
    if lambda == 0.0 {
        return Ok(ConditionIntegral { value: 0.0, clamped });
    }
    let value = match (q, mode) {
        (QuantileFunction::Pareto { r, scale }, IntegralMode::QpOfU) => {
            let e = 1.0 - p / r;
            if e <= 0.0 {
                return Err(SipError::NotIntegrable(format!("Q^{p} with tail exponent r = {r}")));
            }
            scale.powf(p) * lambda.powf(e) / e
        }
        (QuantileFunction::Pareto { r, scale }, IntegralMode::Qpm1CircG) => {
            // Q(G(v)) = scale * (v (1 - 1/r) / scale)^(-1/(r-1)).
            let e = 1.0 - (p - 1.0) / (r - 1.0);
            if e <= 0.0 {
                return Err(SipError::NotIntegrable(format!("Q^{} o G with tail exponent r = {r}", p - 1.0)));
            }
            let k = scale * ((1.0 - 1.0 / r) / scale).powf(-1.0 / (r - 1.0));
            k.powf(p - 1.0) * lambda.powf(e) / e
        }
        (QuantileFunction::Constant { c }, IntegralMode::QpOfU) => c.powf(p) * lambda,
        (QuantileFunction::Constant { c }, IntegralMode::Qpm1CircG) => c.powf(p - 1.0) * lambda,
        (QuantileFunction::Empirical { magnitudes }, IntegralMode::QpOfU) => empirical_power_integral(magnitudes, lambda, p),
        (QuantileFunction::Empirical { magnitudes }, IntegralMode::Qpm1CircG) => {
            empirical_power_integral(magnitudes, hg.g(lambda), p)
        }
    };
    Ok(ConditionIntegral { value, clamped })
}

fn empirical_power_integral(magnitudes: &[f64], x: f64, p: f64) -> f64 {
    let n = magnitudes.len();
    let nf = n as f64;
    let k = ((nf * x).floor() as usize).min(n);
    let mut s: f64 = magnitudes[..k].iter().map(|m| m.powf(p)).sum::<f64>() / nf;
    if k < n {
        s += (x - k as f64 / nf) * magnitudes[k].powf(p);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_unit_log;
    use crate::rng::SeedStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn empirical(xs: &[f64]) -> QuantileFunction {
        quantile_from_sample(&EmpiricalDist::new(xs.to_vec()).unwrap())
    }

    #[test]
    fn sample_quantile_examples() {
        let q = empirical(&[0.0, 0.0, 0.0]);
        for u in [0.01, 0.5, 1.0] {
            assert_eq!(q.eval(u), 0.0);
        }
        let q = empirical(&[2.5]);
        assert_eq!(q.eval(0.3), 2.5);
        assert_eq!(q.eval(0.999), 2.5);
        assert_eq!(q.eval(1.0), 0.0);
        let q = empirical(&[1.0, 2.0, 3.0]);
        assert_eq!(q.eval(0.1), 3.0);
        assert_eq!(q.eval(1.0 / 3.0), 2.0);
        assert_eq!(q.eval(0.5), 2.0);
        assert_eq!(q.eval(2.0 / 3.0), 1.0);
        assert_eq!(q.eval(0.99), 1.0);
    }

    #[test]
    fn hg_examples() {
        let one = QuantileFunction::constant(1.0).unwrap();
        let hg = build_HG(&one, 1e-12).unwrap();
        assert_eq!(hg.h(0.37), 0.37);
        assert_eq!(hg.g(0.37), 0.37);

        let par = QuantileFunction::pareto(4.0, 1.0).unwrap();
        let hg = build_HG(&par, 1e-12).unwrap();
        for x in [0.01, 0.2, 0.9] {
            assert_relative_eq!(hg.h(x), 4.0 / 3.0 * x.powf(0.75), max_relative = 1e-14);
        }
        for u in [0.01, 0.5, 1.3] {
            assert_relative_eq!(hg.g(u), (0.75 * u).powf(4.0 / 3.0), max_relative = 1e-14);
        }

        let hg = build_HG(&empirical(&[1.0, 2.0, 3.0]), 1e-12).unwrap();
        assert_relative_eq!(hg.h(1.0 / 3.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(hg.h(2.0 / 3.0), 5.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn pareto_with_heavy_tail_is_rejected() {
        let q = QuantileFunction::pareto(1.0, 1.0).unwrap();
        let err = build_HG(&q, 1e-12).unwrap_err();
        assert!(err.to_string().starts_with("Q not integrable"));
    }

    #[test]
    fn condition_integral_examples() {
        let one = QuantileFunction::constant(1.0).unwrap();
        let hg = build_HG(&one, 1e-12).unwrap();
        for mode in [IntegralMode::QpOfU, IntegralMode::Qpm1CircG] {
            assert_eq!(condition_integral(&one, &hg, 0.0, 3.0, mode).unwrap().value, 0.0);
            assert_relative_eq!(condition_integral(&one, &hg, 0.3, 3.0, mode).unwrap().value, 0.3);
        }
        let par = QuantileFunction::pareto(4.0, 1.0).unwrap();
        let hg = build_HG(&par, 1e-12).unwrap();
        let v = condition_integral(&par, &hg, 0.5, 3.0, IntegralMode::QpOfU).unwrap();
        assert_relative_eq!(v.value, 4.0 * 0.5f64.powf(0.25), max_relative = 1e-14);
        let c = condition_integral(&par, &hg, 10.0, 3.0, IntegralMode::Qpm1CircG).unwrap();
        assert!(c.clamped);
    }

    #[test]
    fn pareto_integral_matches_quadrature() {
        let par = QuantileFunction::pareto(5.0, 1.7).unwrap();
        let hg = build_HG(&par, 1e-12).unwrap();
        for &(lam, p) in &[(0.3, 3.0), (0.9, 2.0), (0.01, 4.5)] {
            let exact = condition_integral(&par, &hg, lam, p, IntegralMode::QpOfU).unwrap().value;
            let quad = lam * integrate_unit_log(|x| par.eval(lam * x).powf(p), 1e-12).unwrap();
            assert_relative_eq!(exact, quad, max_relative = 1e-9);
        }
    }

    #[test]
    fn change_of_variables_identity() {
        let mut rng = SeedStream::new(3, 0).rng();
        let sample: Vec<f64> = (0..500).map(|_| rng.random::<f64>().powf(-0.2) - 1.0).collect();
        let qs = [QuantileFunction::pareto(4.0, 1.0).unwrap(), empirical(&sample)];
        for q in &qs {
            let hg = build_HG(q, 1e-12).unwrap();
            for i in 1..=20 {
                let a = hg.total_mass() * i as f64 / 21.0;
                let lhs = condition_integral(q, &hg, hg.g(a), 3.0, IntegralMode::QpOfU).unwrap().value;
                let rhs = condition_integral(q, &hg, a, 3.0, IntegralMode::Qpm1CircG).unwrap().value;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn bisection_inverse_agrees() {
        let hg = build_HG(&QuantileFunction::pareto(3.0, 1.0).unwrap(), 1e-13).unwrap();
        for u in [0.05, 0.7, 1.2] {
            assert_relative_eq!(hg.g(u), hg.g_by_bisection(u), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn empirical_quantile_nonincreasing_and_round_trip(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..200)
        ) {
            let q = empirical(&xs);
            let mut prev = f64::INFINITY;
            for i in 1..=1000 {
                let v = q.eval(i as f64 / 1000.0);
                prop_assert!(v <= prev);
                prev = v;
            }
            let hg = build_HG(&q, 1e-12).unwrap();
            for i in 0..=1000 {
                let u = hg.total_mass() * i as f64 / 1000.0;
                prop_assert!((hg.h(hg.g(u)) - u).abs() < 1e-10 * (1.0 + hg.total_mass()));
            }
        }

        #[test]
        fn condition_integral_nondecreasing(l1 in 0.0f64..1.0, dl in 0.0f64..1.0, r in 3.5f64..8.0) {
            let q = QuantileFunction::pareto(r, 1.0).unwrap();
            let hg = build_HG(&q, 1e-12).unwrap();
            let a = condition_integral(&q, &hg, l1, 3.0, IntegralMode::QpOfU).unwrap().value;
            let b = condition_integral(&q, &hg, l1 + dl, 3.0, IntegralMode::QpOfU).unwrap().value;
            prop_assert!(b >= a);
        }
    }
}
