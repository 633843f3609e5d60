//! Continued fractions, distances `d(ka, Z)` and Diophantine diagnostics for
//! the rotation numbers driving the circle walk.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SipError};
use crate::projective::series::{ConditionId, SeriesDiagnostic, Verdict};
use crate::stats::{loglog_rate_fit, RateFit};

/// Largest `|k|` for which `frac(k a)` is trusted to better than `1e-12 / |k|`.
pub const SAFE_MULTIPLIER: u128 = 1 << 40;

/// Named rotation numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyId {
    /// `(sqrt 5 - 1) / 2`
    Golden,
    /// `sqrt 2 - 1`
    Sqrt2,
    /// `2^(1/3) - 1`
    Cubic,
    Rational { p: u64, q: u64 },
    /// The exact binary value of a double.
    Value { a: f64 },
}

impl FrequencyId {
    pub fn build(&self) -> Result<Frequency> {
        Frequency::from_id(*self)
    }
}

/// A number in `[0, 1)` held either as the 128-bit dyadic interval
/// `[A, A+1) / 2^128` enclosing it or as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Fixed { frac: u128, exact: bool },
    Rational { p: u64, q: u64 },
}

fn two_pow(bits: u64) -> BigUint {
    BigUint::one() << bits
}

impl Frequency {
    pub fn from_id(id: FrequencyId) -> Result<Self> {
        let one = two_pow(128);
        let fixed = |v: BigUint| Frequency::Fixed { frac: v.to_u128().expect("fraction below one"), exact: false };
        Ok(match id {
            FrequencyId::Golden => {
                let s = (BigUint::from(5u32) << 256u32).sqrt();
                fixed((s - &one) >> 1u32)
            }
            FrequencyId::Sqrt2 => {
                let s = (BigUint::from(2u32) << 256u32).sqrt();
                fixed(s - &one)
            }
            FrequencyId::Cubic => {
                let s = (BigUint::from(2u32) << 384u32).nth_root(3);
                fixed(s - &one)
            }
            FrequencyId::Rational { p, q } => {
                if q == 0 || p >= q {
                    return Err(invalid("a", format!("rational frequency needs 0 <= p < q, got {p}/{q}")));
                }
                let g = p.gcd(&q);
                Frequency::Rational { p: p / g, q: q / g }
            }
            FrequencyId::Value { a } => {
                if !(0.0..1.0).contains(&a) {
                    return Err(invalid("a", format!("must lie in [0, 1), got {a}")));
                }
                // Every double in [0, 1) is a multiple of 2^-1074; those above
                // 2^-75 are exact multiples of 2^-128.
                let scaled = a * 2f64.powi(64);
                let hi = scaled.floor();
                let lo = (scaled - hi) * 2f64.powi(64);
                Frequency::Fixed { frac: ((hi as u128) << 64) | lo as u128, exact: true }
            }
        })
    }

    pub fn to_f64(&self) -> f64 {
        match *self {
            Frequency::Fixed { frac, .. } => frac as f64 / 2f64.powi(128),
            Frequency::Rational { p, q } => p as f64 / q as f64,
        }
    }

    /// `k a mod 1` in `[0, 1)`, reduced before conversion to double.
    pub fn frac_mul(&self, k: i64) -> Result<f64> {
        match *self {
            Frequency::Fixed { frac, .. } => {
                let mag = k.unsigned_abs() as u128;
                if mag > SAFE_MULTIPLIER {
                    return Err(SipError::PrecisionLoss { k: mag, safe: SAFE_MULTIPLIER });
                }
                let prod = frac.wrapping_mul(mag);
                let prod = if k < 0 { prod.wrapping_neg() } else { prod };
                Ok(prod as f64 / 2f64.powi(128))
            }
            Frequency::Rational { p, q } => {
                let r = (k as i128 * p as i128).rem_euclid(q as i128);
                Ok(r as f64 / q as f64)
            }
        }
    }

    /// Same as [`Frequency::frac_mul`] but centered in `[-1/2, 1/2)`.
    pub fn centered_mul(&self, k: i64) -> Result<f64> {
        let f = self.frac_mul(k)?;
        Ok(if f >= 0.5 { f - 1.0 } else { f })
    }

    /// `cos(2 pi k a)` computed from the reduced product.
    pub fn cos_mul(&self, k: i64) -> Result<f64> {
        Ok((2.0 * std::f64::consts::PI * self.centered_mul(k)?).cos())
    }

    fn enclosing_rationals(&self) -> Vec<(BigUint, BigUint)> {
        match *self {
            Frequency::Fixed { frac, exact } => {
                let den = two_pow(128);
                let lo = (BigUint::from(frac), den.clone());
                if exact {
                    vec![lo]
                } else {
                    vec![lo, (BigUint::from(frac) + 1u32, den)]
                }
            }
            Frequency::Rational { p, q } => vec![(BigUint::from(p), BigUint::from(q))],
        }
    }
}

/// `d(k a, Z)`.
pub fn dist_to_lattice(k: i64, a: &Frequency) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "must be nonzero"));
    }
    Ok(a.centered_mul(k)?.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    pub partial_quotients: Vec<u128>,
    /// `(p_j, q_j)` for `j = 0..=D`.
    pub convergents: Vec<(BigInt, BigInt)>,
    /// Expansion ended exactly (rational input).
    pub terminated: bool,
}

impl ContinuedFraction {
    pub fn denominators_u64(&self) -> Vec<u64> {
        self.convergents.iter().map_while(|(_, q)| q.to_u64()).collect()
    }
}

fn euclid_quotients(mut num: BigUint, mut den: BigUint, limit: usize) -> (Vec<BigUint>, bool) {
    let mut out = Vec::new();
    while out.len() < limit {
        if den.is_zero() {
            return (out, true);
        }
        let (q, r) = num.div_rem(&den);
        out.push(q);
        num = den;
        den = r;
    }
    (out, den.is_zero())
}

/// Partial quotients `a_0..a_D` and exact convergents of `a`.
///
/// For a dyadic enclosure only the quotients shared by both endpoints, less
/// the last one, are certain; asking for more is an error naming that depth.
pub fn continued_fraction(a: &Frequency, depth: usize) -> Result<ContinuedFraction> {
    let ends = a.enclosing_rationals();
    let (first, terminated) = euclid_quotients(ends[0].0.clone(), ends[0].1.clone(), depth + 2);
    let (quotients, terminated) = if ends.len() == 1 {
        (first, terminated)
    } else {
        let (second, _) = euclid_quotients(ends[1].0.clone(), ends[1].1.clone(), depth + 2);
        let common = first.iter().zip(&second).take_while(|(x, y)| x == y).count();
        let safe = common.saturating_sub(1);
        if safe < depth + 1 {
            return Err(SipError::PrecisionExhausted { safe_depth: safe.saturating_sub(1) });
        }
        (first[..safe].to_vec(), false)
    };
    let take = quotients.len().min(depth + 1);
    let partial: Vec<u128> = quotients[..take].iter().map(|q| q.to_u128().unwrap_or(u128::MAX)).collect();
    let mut convergents = Vec::with_capacity(take);
    let (mut p2, mut q2) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    for q in &quotients[..take] {
        let qi = BigInt::from(q.clone());
        let p = &qi * &p1 + &p2;
        let qq = &qi * &q1 + &q2;
        convergents.push((p.clone(), qq.clone()));
        p2 = std::mem::replace(&mut p1, p);
        q2 = std::mem::replace(&mut q1, qq);
    }
    Ok(ContinuedFraction { partial_quotients: partial, convergents, terminated: terminated && take == quotients.len() })
}

/// Deepest index available for `a`.
pub fn safe_depth(a: &Frequency) -> usize {
    match continued_fraction(a, 10_000) {
        Ok(cf) => cf.partial_quotients.len() - 1,
        Err(SipError::PrecisionExhausted { safe_depth }) => safe_depth,
        Err(_) => 0,
    }
}

/// `d(k a, Z)` from the Ostrowski expansion `k = Σ b_j q_j` and the signed
/// errors `q_j a - p_j = (-1)^j / (q_j α_{j+1} + q_{j-1})`, where the complete
/// quotients `α_j` are rebuilt in floating point from the partial quotients.
pub fn dist_to_lattice_ostrowski(k: u64, cf: &ContinuedFraction) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "must be nonzero"));
    }
    let qs = cf.denominators_u64();
    let d = cf.partial_quotients.len();
    let needed = qs.iter().position(|&q| q > k).ok_or(SipError::PrecisionExhausted { safe_depth: d - 1 })?;
    if needed + 1 >= d {
        return Err(SipError::PrecisionExhausted { safe_depth: d - 1 });
    }
    // Complete quotients α_j = a_j + 1/α_{j+1}, seeded at the deepest level.
    let mut alpha = vec![0.0f64; d];
    alpha[d - 1] = cf.partial_quotients[d - 1] as f64;
    for j in (1..d - 1).rev() {
        alpha[j] = cf.partial_quotients[j] as f64 + 1.0 / alpha[j + 1];
    }
    let theta = |j: usize| {
        let qprev = if j == 0 { 0.0 } else { qs[j - 1] as f64 };
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign / (qs[j] as f64 * alpha[j + 1] + qprev)
    };
    let mut rest = k;
    let mut s = 0.0;
    for j in (0..needed).rev() {
        let b = rest / qs[j];
        rest -= b * qs[j];
        s += b as f64 * theta(j);
    }
    let s = s - s.round();
    Ok(s.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadlyApproximableReport {
    /// `min_{k <= k_max} k d(k a, Z)`
    pub c_hat: f64,
    pub argmin: u64,
    /// Running minimum of `k d(k a, Z)` at `k = 2^j`.
    pub running_min: Vec<(u64, f64)>,
    /// Log-log fit of the running minimum against `k`; absent when it hits 0.
    pub trend: Option<RateFit>,
}

pub fn badly_approximable_report(a: &Frequency, k_max: u64) -> Result<BadlyApproximableReport> {
    if k_max < 8 {
        return Err(invalid("k_max", "must be at least 8"));
    }
    let mut c_hat = f64::INFINITY;
    let mut argmin = 1;
    let mut running_min = Vec::new();
    let mut next_mark = 2u64;
    for k in 1..=k_max {
        let v = k as f64 * dist_to_lattice(k as i64, a)?;
        if v < c_hat {
            c_hat = v;
            argmin = k;
        }
        if k == next_mark {
            running_min.push((k, c_hat));
            next_mark *= 2;
        }
    }
    let trend = if running_min.len() >= 3 && running_min.iter().all(|(_, v)| *v > 0.0) {
        let ns: Vec<f64> = running_min.iter().map(|(k, _)| *k as f64).collect();
        let ys: Vec<f64> = running_min.iter().map(|(_, v)| *v).collect();
        Some(loglog_rate_fit(&ns, &ys)?)
    } else {
        None
    };
    Ok(BadlyApproximableReport { c_hat, argmin, running_min, trend })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParouxReport {
    /// Sums of `|f̂(k)|² / d(ka, Z)²` over `2^j <= |k| < 2^{j+1}`, both signs.
    pub block_sums: Vec<f64>,
    pub block_maxima: Vec<f64>,
    /// Largest term at each convergent denominator within range.
    pub convergent_terms: Vec<(u64, f64)>,
    /// Block maxima fail to decay (fitted slope above -0.05).
    pub maxima_not_vanishing: bool,
    pub diagnostic: SeriesDiagnostic,
}

/// Dyadic-block partial sums of `Σ_{k≠0} |f̂(k)|² / d(ka, Z)²`.
///
/// `coefficient(k)` returns `|f̂(k)|` for `k >= 1`; the spectrum is taken
/// symmetric.
pub fn paroux_series<F: Fn(u64) -> f64>(coefficient: F, a: &Frequency, k_trunc: u64) -> Result<ParouxReport> {
    if k_trunc < 1 {
        return Err(invalid("k_trunc", "must be at least 1"));
    }
    let mut block_sums = Vec::new();
    let mut block_maxima = Vec::new();
    let mut lo = 1u64;
    while lo <= k_trunc {
        let hi = (2 * lo - 1).min(k_trunc);
        let mut s = 0.0;
        let mut m = 0.0f64;
        for k in lo..=hi {
            let c = coefficient(k);
            if c == 0.0 {
                continue;
            }
            let d = dist_to_lattice(k as i64, a)?;
            if d == 0.0 {
                return Err(SipError::ResonantFrequency { k: k as i64 });
            }
            let t = 2.0 * c * c / (d * d);
            s += t;
            m = m.max(t);
        }
        block_sums.push(s);
        block_maxima.push(m);
        lo *= 2;
    }
    let mut convergent_terms = Vec::new();
    if let Ok(cf) = continued_fraction(a, safe_depth(a).min(200)) {
        for q in cf.denominators_u64() {
            if q >= 1 && q <= k_trunc {
                let c = coefficient(q);
                let d = dist_to_lattice(q as i64, a)?;
                if d > 0.0 {
                    convergent_terms.push((q, 2.0 * c * c / (d * d)));
                }
            }
        }
    }
    let starts: Vec<u64> = (0..block_sums.len()).map(|j| 1u64 << j).collect();
    let diagnostic = SeriesDiagnostic::from_block_sums(ConditionId::Paroux, Default::default(), &starts, &block_sums, k_trunc);
    let upper = block_maxima.len() / 2;
    let maxima_not_vanishing = {
        let pts: Vec<(f64, f64)> = starts[upper..]
            .iter()
            .zip(&block_maxima[upper..])
            .filter(|(_, m)| **m > 0.0)
            .map(|(s, m)| (*s as f64, *m))
            .collect();
        if pts.len() >= 3 {
            let (ns, ms): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            loglog_rate_fit(&ns, &ms).map(|f| f.slope > -0.05).unwrap_or(false)
        } else {
            false
        }
    };
    let mut diagnostic = diagnostic;
    if maxima_not_vanishing && diagnostic.verdict == Verdict::Converges {
        diagnostic.verdict = Verdict::Inconclusive;
        diagnostic.notes.push("block maxima do not vanish".into());
    }
    Ok(ParouxReport { block_sums, block_maxima, convergent_terms, maxima_not_vanishing, diagnostic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn golden() -> Frequency {
        FrequencyId::Golden.build().unwrap()
    }

    #[test]
    fn catalog_values() {
        assert_relative_eq!(golden().to_f64(), (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(FrequencyId::Sqrt2.build().unwrap().to_f64(), 2f64.sqrt() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(FrequencyId::Cubic.build().unwrap().to_f64(), 2f64.cbrt() - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rational_half() {
        let a = FrequencyId::Rational { p: 1, q: 2 }.build().unwrap();
        let cf = continued_fraction(&a, 5).unwrap();
        assert_eq!(cf.partial_quotients, vec![0, 2]);
        assert!(cf.terminated);
        for k in [2, 4, -6, 100] {
            assert_eq!(dist_to_lattice(k, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn golden_is_fibonacci() {
        let cf = continued_fraction(&golden(), 60).unwrap();
        assert_eq!(cf.partial_quotients[0], 0);
        assert!(cf.partial_quotients[1..].iter().all(|&q| q == 1));
        let qs = cf.denominators_u64();
        let (mut f0, mut f1) = (1u64, 1u64);
        for &q in &qs[..50] {
            assert_eq!(q, f0);
            let f2 = f0 + f1;
            f0 = f1;
            f1 = f2;
        }
    }

    #[test]
    fn convergent_identity_and_approximation() {
        for id in [FrequencyId::Golden, FrequencyId::Sqrt2, FrequencyId::Cubic] {
            let a = id.build().unwrap();
            let depth = safe_depth(&a);
            assert!(depth >= 30, "{id:?} only reaches depth {depth}");
            let cf = continued_fraction(&a, depth).unwrap();
            for j in 1..cf.convergents.len() {
                let (p, q) = &cf.convergents[j];
                let (pp, qp) = &cf.convergents[j - 1];
                let det = p * qp - pp * q;
                let expected = if (j - 1) % 2 == 0 { BigInt::one() } else { -BigInt::one() };
                assert_eq!(det, expected);
            }
            for (p, q) in &cf.convergents {
                if let (Some(p), Some(q)) = (p.to_i64(), q.to_i64()) {
                    if q > 1 && q < 1_000_000 {
                        let err = (p as f64 - q as f64 * a.to_f64()).abs();
                        assert!(err < 1.0 / q as f64 + 1e-6);
                        assert!(dist_to_lattice(q, &a).unwrap() < 1.0 / q as f64);
                    }
                }
            }
        }
    }

    #[test]
    fn depth_beyond_precision_errors() {
        let err = continued_fraction(&golden(), 500).unwrap_err();
        assert!(matches!(err, SipError::PrecisionExhausted { safe_depth } if safe_depth > 60));
        let err = golden().frac_mul(1 << 50).unwrap_err();
        assert!(matches!(err, SipError::PrecisionLoss { .. }));
    }

    #[test]
    fn two_routes_agree() {
        for id in [FrequencyId::Golden, FrequencyId::Sqrt2, FrequencyId::Cubic] {
            let a = id.build().unwrap();
            let cf = continued_fraction(&a, safe_depth(&a)).unwrap();
            for k in (1..=100_000u64).step_by(7).chain([89, 144, 233, 28657, 46368, 75025]) {
                let direct = dist_to_lattice(k as i64, &a).unwrap();
                let ostrowski = dist_to_lattice_ostrowski(k, &cf).unwrap();
                assert!((direct - ostrowski).abs() < 1e-12, "{id:?} k={k}: {direct} vs {ostrowski}");
            }
        }
    }

    #[test]
    fn badly_approximable_profiles() {
        let r = badly_approximable_report(&golden(), 100_000).unwrap();
        assert!(r.c_hat > 0.2, "c_hat {}", r.c_hat);
        assert!(r.trend.unwrap().slope.abs() < 0.05);
        let third = FrequencyId::Rational { p: 1, q: 3 }.build().unwrap();
        let r = badly_approximable_report(&third, 100).unwrap();
        assert_eq!(r.c_hat, 0.0);
        assert_eq!(r.argmin, 3);
        let r = badly_approximable_report(&FrequencyId::Sqrt2.build().unwrap(), 100_000).unwrap();
        assert!(r.c_hat > 0.2);
    }

    #[test]
    fn paroux_examples() {
        let a = golden();
        let single = paroux_series(|k| if k == 1 { 0.7 } else { 0.0 }, &a, 64).unwrap();
        let d = dist_to_lattice(1, &a).unwrap();
        assert_relative_eq!(single.block_sums.iter().sum::<f64>(), 2.0 * 0.49 / (d * d), max_relative = 1e-14);

        let smooth = paroux_series(|k| (k as f64).powf(-1.5), &a, 1 << 18).unwrap();
        assert_eq!(smooth.diagnostic.verdict, Verdict::Converges);

        let rough = paroux_series(|k| 1.0 / k as f64, &a, 1 << 18).unwrap();
        assert_ne!(rough.diagnostic.verdict, Verdict::Converges);
        assert!(rough.convergent_terms.iter().rev().take(5).all(|(_, t)| *t > 1.0));
    }

    proptest! {
        #[test]
        fn paroux_partial_sums_nondecreasing(s in 0.6f64..3.0) {
            let r = paroux_series(|k| (k as f64).powf(-s), &golden(), 4096).unwrap();
            prop_assert!(r.diagnostic.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn frac_mul_matches_double_for_small_k(k in -1000i64..1000) {
            let a = golden();
            let exact = a.frac_mul(k).unwrap();
            let naive = (k as f64 * a.to_f64()).rem_euclid(1.0);
            let diff = (exact - naive).abs();
            prop_assert!(diff.min(1.0 - diff) < 1e-12);
        }
    }
}
