use rand::Rng;

use crate::error::{invalid, Result, SipError};
use crate::numerics::integrate_unit_log;
use crate::processes::dmr::Dmr;
use crate::processes::{Innovation, ProcessSpec};
use crate::rng::{open_unit, SipRng};
use crate::stats::Cdf;

/// Mass left outside the truncation level of unbounded increment laws.
pub const TRUNCATION_MASS: f64 = 1e-6;

/// One transition: martingale increment `d`, observable `x` and new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<S> {
    pub d: f64,
    pub x: f64,
    pub state: S,
}

/// A stationary process whose partial sums differ from a martingale
/// `Σ d_i` by a coboundary, with the conditional law of each increment
/// available given the previous state. Increment laws must be centered
/// and put no mass at zero.
pub trait MartingaleSource: Sync {
    type State: Copy + Send + Sync;

    /// A draw from the stationary law.
    fn start(&self, rng: &mut SipRng) -> Self::State;

    fn step(&self, state: Self::State, rng: &mut SipRng) -> Result<Step<Self::State>>;

    /// `P(d > 0)` or `P(d < 0)` given the state.
    fn side_mass(&self, state: Self::State, positive: bool) -> f64;

    /// A transition conditioned on the sign of its increment.
    fn sample_side(&self, state: Self::State, positive: bool, rng: &mut SipRng) -> Result<Step<Self::State>>;

    /// Level `L` and a bound on `P(|d| > L)`.
    fn truncation(&self, state: Self::State) -> (f64, f64);

    fn conditional_variance(&self, state: Self::State) -> Result<f64>;

    fn conditional_law(&self, state: Self::State) -> Result<Box<dyn Cdf + '_>>;

    /// `E(d²)` under the stationary law.
    fn sigma2(&self) -> Result<f64>;
}

/// Independent increments `d = X` from a symmetric law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidSource {
    pub law: Innovation,
    level: f64,
    tail: f64,
}

impl IidSource {
    pub fn new(law: Innovation) -> Result<Self> {
        law.validate()?;
        if law.variance().is_none() {
            return Err(invalid("law", "the coupling needs a finite variance"));
        }
        let level = law.quantile(1.0 - 0.5 * TRUNCATION_MASS);
        let tail = 2.0 * (1.0 - law.cdf(level));
        Ok(IidSource { law, level, tail: tail.max(0.0) })
    }
}

impl MartingaleSource for IidSource {
    type State = ();

    fn start(&self, _rng: &mut SipRng) {}

    fn step(&self, _state: (), rng: &mut SipRng) -> Result<Step<()>> {
        let d = self.law.sample(rng);
        Ok(Step { d, x: d, state: () })
    }

    fn side_mass(&self, _state: (), _positive: bool) -> f64 {
        0.5
    }

    fn sample_side(&self, _state: (), positive: bool, rng: &mut SipRng) -> Result<Step<()>> {
        let m = self.law.sample(rng).abs();
        let d = if positive { m } else { -m };
        Ok(Step { d, x: d, state: () })
    }

    fn truncation(&self, _state: ()) -> (f64, f64) {
        (self.level, self.tail)
    }

    fn conditional_variance(&self, _state: ()) -> Result<f64> {
        self.sigma2()
    }

    fn conditional_law(&self, _state: ()) -> Result<Box<dyn Cdf + '_>> {
        Ok(Box::new(self.law))
    }

    fn sigma2(&self) -> Result<f64> {
        self.law.variance().ok_or_else(|| invalid("law", "infinite variance"))
    }
}

/// The chain `Y` with increments `d_i = f(Y_i)/|Y_i| - f(Y_{i-1})/|Y_{i-1}| + f(Y_{i-1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmrSource {
    pub chain: Dmr,
}

impl DmrSource {
    pub fn new(chain: Dmr) -> Self {
        DmrSource { chain }
    }

    /// `|ζ|` cut points: a refresh with sign `+` gives `d > 0` iff
    /// `|ζ| < c_plus`, and with sign `-` gives `d > 0` iff `|ζ| > c_minus`.
    fn cuts(&self, shift: f64) -> (f64, f64) {
        let e = 1.0 / (self.chain.beta - 1.0);
        let cut = |s: f64| if s <= 1.0 { 1.0 } else { s.powf(e) };
        (cut(shift), cut(-shift))
    }

    /// Refresh magnitude intervals `(lo, hi)` per sign `[+, -]` giving the
    /// requested sign of `d`.
    fn refresh_intervals(&self, shift: f64, positive: bool) -> [(f64, f64); 2] {
        let (cp, cm) = self.cuts(shift);
        if positive {
            [(0.0, cp), (cm, 1.0)]
        } else {
            [(cp, 1.0), (0.0, cm)]
        }
    }

    fn interval_mass(&self, (lo, hi): (f64, f64)) -> f64 {
        let k = self.chain.a + 1.0;
        0.5 * (hi.powf(k) - lo.powf(k)).max(0.0)
    }
}

impl MartingaleSource for DmrSource {
    type State = f64;

    fn start(&self, rng: &mut SipRng) -> f64 {
        self.chain.sample_stationary(rng)
    }

    fn step(&self, y: f64, rng: &mut SipRng) -> Result<Step<f64>> {
        let next = self.chain.step(y, rng);
        Ok(Step { d: self.chain.martingale_increment(y, next)?, x: self.chain.f(next), state: next })
    }

    fn side_mass(&self, y: f64, positive: bool) -> f64 {
        let s = y.abs();
        let shift = self.chain.f(y) * (1.0 - s) / s;
        let atom = if (y > 0.0) == positive { 1.0 - s } else { 0.0 };
        let [p, m] = self.refresh_intervals(shift, positive);
        atom + s * (self.interval_mass(p) + self.interval_mass(m))
    }

    fn sample_side(&self, y: f64, positive: bool, rng: &mut SipRng) -> Result<Step<f64>> {
        let s = y.abs();
        let shift = self.chain.g(y)?;
        let atom = if (y > 0.0) == positive { 1.0 - s } else { 0.0 };
        let [ip, im] = self.refresh_intervals(shift, positive);
        let (mp, mm) = (s * self.interval_mass(ip), s * self.interval_mass(im));
        let total = atom + mp + mm;
        if !(total > 0.0) {
            return Err(invalid("state", "increment law has an empty side"));
        }
        let u = rng.random::<f64>() * total;
        if u < atom {
            return Ok(Step { d: self.chain.f(y), x: self.chain.f(y), state: y });
        }
        let (sign, (lo, hi)) = if u < atom + mp { (1.0, ip) } else { (-1.0, im) };
        let k = self.chain.a + 1.0;
        let (lk, hk) = (lo.powf(k), hi.powf(k));
        let t = (lk + open_unit(rng) * (hk - lk)).powf(1.0 / k).max(f64::MIN_POSITIVE);
        let next = sign * t;
        Ok(Step { d: self.chain.martingale_increment(y, next)?, x: self.chain.f(next), state: next })
    }

    fn truncation(&self, y: f64) -> (f64, f64) {
        let s = y.abs();
        let shift = (self.chain.f(y) * (1.0 - s) / s).abs();
        if self.chain.beta == 1.0 {
            return (shift + 1.0, 0.0);
        }
        // P(|W| > w) = w^{-κ} for w >= 1.
        let kappa = (self.chain.a + 1.0) / (1.0 - self.chain.beta);
        let w = (s / TRUNCATION_MASS).powf(1.0 / kappa).max(1.0);
        (shift + w, s * w.powf(-kappa))
    }

    fn conditional_variance(&self, y: f64) -> Result<f64> {
        self.chain.increment_conditional_variance(y)
    }

    fn conditional_law(&self, y: f64) -> Result<Box<dyn Cdf + '_>> {
        Ok(Box::new(self.chain.increment_law(y)?))
    }

    fn sigma2(&self) -> Result<f64> {
        let a = self.chain.a;
        integrate_unit_log(
            |x| a * x.powf(a - 1.0) * self.chain.increment_conditional_variance(x).unwrap_or(f64::NAN),
            1e-10,
        )
    }
}

/// The martingale source of a process family, if it has one.
pub enum AnySource {
    Iid(IidSource),
    Dmr(DmrSource),
}

impl AnySource {
    pub fn from_spec(spec: &ProcessSpec) -> Result<Self> {
        spec.validate()?;
        match spec {
            ProcessSpec::Iid { law } => Ok(AnySource::Iid(IidSource::new(*law)?)),
            ProcessSpec::Dmr { a, f_exponent } => Ok(AnySource::Dmr(DmrSource::new(Dmr::new(*a, *f_exponent)?))),
            other => Err(SipError::NoKernelOracle(format!(
                "coupling needs closed-form increment laws, unavailable for {}",
                other.family()
            ))),
        }
    }
}
