//! Stationary path generation and exact-kernel computations for the example
//! process families.

pub mod arl;
pub mod chain;
pub mod circle;
pub mod dmr;
pub mod iid;
pub mod linear;
pub mod pm;

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SipError};
use crate::numtheory::FrequencyId;
use crate::rng::{map_replicas, open_unit, random_sign, SeedStream, SipRng};
use crate::stats::fmt17;

pub use chain::{Csr, DiscreteChain, Transition};

/// Symmetric innovation laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    Gaussian {
        #[serde(default = "one")]
        sd: f64,
    },
    StudentT { nu: f64 },
    /// Random sign times a Lomax magnitude: `P(|ε| > x) = (1 + x)^{-r}`.
    SymPareto { r: f64 },
    Rademacher,
    Uniform {
        #[serde(default = "one")]
        half_width: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Innovation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Innovation::Gaussian { sd } if !(sd > 0.0) => Err(invalid("sd", "must be positive")),
            Innovation::StudentT { nu } if !(nu > 0.0) => Err(invalid("nu", "must be positive")),
            Innovation::SymPareto { r } if !(r > 0.0) => Err(invalid("r", "must be positive")),
            Innovation::Uniform { half_width } if !(half_width > 0.0) => {
                Err(invalid("half_width", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Whether `E|ε|^s` is finite.
    pub fn has_moment(&self, s: f64) -> bool {
        match *self {
            Innovation::StudentT { nu } => nu > s,
            Innovation::SymPareto { r } => r > s,
            _ => true,
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match *self {
            Innovation::Gaussian { sd } => Some(sd * sd),
            Innovation::StudentT { nu } => (nu > 2.0).then(|| nu / (nu - 2.0)),
            Innovation::SymPareto { r } => (r > 2.0).then(|| 2.0 / ((r - 1.0) * (r - 2.0))),
            Innovation::Rademacher => Some(1.0),
            Innovation::Uniform { half_width } => Some(half_width * half_width / 3.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Innovation::Gaussian { sd } => Normal::new(0.0, sd).expect("validated").sample(rng),
            Innovation::StudentT { nu } => StudentT::new(nu).expect("validated").sample(rng),
            Innovation::SymPareto { r } => random_sign(rng) * (open_unit(rng).powf(-1.0 / r) - 1.0),
            Innovation::Rademacher => random_sign(rng),
            Innovation::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Innovation::Gaussian { sd } => crate::stats::normal_cdf(x / sd),
            Innovation::StudentT { nu } => {
                use statrs::distribution::ContinuousCDF;
                statrs::distribution::StudentsT::new(0.0, 1.0, nu).expect("validated").cdf(x)
            }
            Innovation::SymPareto { r } => {
                let tail = 0.5 * (1.0 + x.abs()).powf(-r);
                if x >= 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
            Innovation::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            Innovation::Uniform { half_width } => ((x + half_width) / (2.0 * half_width)).clamp(0.0, 1.0),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Innovation::Gaussian { sd } => sd * crate::stats::normal_quantile(u),
            Innovation::StudentT { nu } => {
                use statrs::distribution::ContinuousCDF;
                statrs::distribution::StudentsT::new(0.0, 1.0, nu).expect("validated").inverse_cdf(u)
            }
            Innovation::SymPareto { r } => {
                let t = 2.0 * u.min(1.0 - u);
                let m = t.powf(-1.0 / r) - 1.0;
                if u >= 0.5 {
                    m
                } else {
                    -m
                }
            }
            Innovation::Rademacher => {
                if u <= 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            Innovation::Uniform { half_width } => half_width * (2.0 * u - 1.0),
        }
    }
}

impl crate::stats::Cdf for Innovation {
    fn cdf(&self, x: f64) -> f64 {
        Innovation::cdf(self, x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        match *self {
            Innovation::Rademacher => {
                if x <= -1.0 {
                    0.0
                } else if x <= 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            _ => Innovation::cdf(self, x),
        }
    }
}

/// Coefficient perturbation of the linear filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum USequence {
    Zero,
    /// `u_k = (k+1)^{-exponent}`
    Power { exponent: f64 },
}

impl Default for USequence {
    fn default() -> Self {
        USequence::Power { exponent: 0.6 }
    }
}

/// Observable of the intermittent-map chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PmObservable {
    /// `1{x <= threshold}` minus its stationary mean.
    Indicator { threshold: f64 },
    /// `x^{exponent}` minus its stationary mean.
    Power { exponent: f64 },
}

impl Default for PmObservable {
    fn default() -> Self {
        PmObservable::Indicator { threshold: 0.5 }
    }
}

fn half() -> f64 {
    0.5
}
fn default_burn_in() -> u64 {
    10_000
}
fn default_cells() -> usize {
    2048
}

/// One of the process families, with its designated observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// Chain staying put with probability `1-|x|`, otherwise refreshed from
    /// the law with density `(a+1)|t|^a/2`; observable `sign(x)|x|^f_exponent`.
    Dmr {
        a: f64,
        #[serde(default = "half")]
        f_exponent: f64,
    },
    /// Random walk `x ± a mod 1` observed through a Fourier series.
    Circle {
        frequency: FrequencyId,
        #[serde(default)]
        fourier: circle::FourierSpec,
    },
    /// `Y_n = h(Y_{n-1}) + ε_n` with an observable `sign(y) min(|y|, clip)^holder`.
    Arl {
        c: f64,
        delta: f64,
        s: f64,
        innovation: Innovation,
        #[serde(default = "one")]
        holder: f64,
        #[serde(default)]
        clip: Option<f64>,
        #[serde(default = "default_burn_in")]
        burn_in: u64,
    },
    /// Time reversal of the intermittent map `x(1 + 2^γ x^γ)` / `2x - 1`.
    Pm {
        gamma: f64,
        #[serde(default)]
        observable: PmObservable,
        #[serde(default = "default_cells")]
        ulam_cells: usize,
        #[serde(default = "default_burn_in")]
        burn_in: u64,
    },
    /// `X_k = Σ_j a_j ε_{k-j}` with `a_k = k^{-(α+1)} + (-1)^k u_k`.
    Linear {
        alpha: f64,
        #[serde(default)]
        u_seq: USequence,
        innovation: Innovation,
        #[serde(default)]
        lag_trunc: Option<usize>,
    },
    /// Independent draws.
    Iid { law: Innovation },
}

impl ProcessSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ProcessSpec::Dmr { .. } => "dmr",
            ProcessSpec::Circle { .. } => "circle",
            ProcessSpec::Arl { .. } => "arl",
            ProcessSpec::Pm { .. } => "pm",
            ProcessSpec::Linear { .. } => "linear",
            ProcessSpec::Iid { .. } => "iid",
        }
    }

    pub fn burn_in(&self) -> u64 {
        match self {
            ProcessSpec::Arl { burn_in, .. } | ProcessSpec::Pm { burn_in, .. } => *burn_in,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::Dmr { a, f_exponent } => dmr::Dmr::new(*a, *f_exponent).map(|_| ()),
            ProcessSpec::Circle { frequency, fourier } => circle::Circle::new(*frequency, fourier).map(|_| ()),
            ProcessSpec::Arl { .. } => arl::Arl::from_spec(self).map(|_| ()),
            ProcessSpec::Pm { gamma, ulam_cells, .. } => {
                pm::PmMap::new(*gamma)?;
                if *ulam_cells < 64 {
                    return Err(invalid("ulam_cells", "must be at least 64"));
                }
                Ok(())
            }
            ProcessSpec::Linear { .. } => linear::Linear::from_spec(self).map(|_| ()),
            ProcessSpec::Iid { law } => law.validate(),
        }
    }

    /// Kernel evaluators for Markov families with closed-form or discretized kernels.
    pub fn kernel_oracle(&self) -> Result<Box<dyn KernelOracle>> {
        match self {
            ProcessSpec::Dmr { a, f_exponent } => Ok(Box::new(dmr::Dmr::new(*a, *f_exponent)?)),
            ProcessSpec::Circle { frequency, fourier } => Ok(Box::new(circle::Circle::new(*frequency, fourier)?)),
            ProcessSpec::Pm { gamma, observable, ulam_cells, .. } => {
                Ok(Box::new(pm::PmChain::cached(*gamma, *ulam_cells, *observable)?.as_ref().clone()))
            }
            ProcessSpec::Iid { law } => Ok(Box::new(iid::Iid::new(*law)?)),
            other => Err(SipError::NoKernelOracle(other.family().into())),
        }
    }

    /// Finite-state version of the chain for matrix-power computations.
    pub fn discrete_chain(&self) -> Result<DiscreteChain> {
        match self {
            ProcessSpec::Dmr { a, f_exponent } => Ok(dmr::Dmr::new(*a, *f_exponent)?.discrete_chain(dmr::DEFAULT_PANEL_NODES)),
            ProcessSpec::Pm { gamma, observable, ulam_cells, .. } => {
                Ok(pm::PmChain::cached(*gamma, *ulam_cells, *observable)?.discrete_chain())
            }
            ProcessSpec::Iid { law } => Ok(iid::Iid::new(*law)?.discrete_chain(256)),
            other => Err(SipError::NoKernelOracle(format!("{} (no transfer matrix)", other.family()))),
        }
    }

    /// Builds the path generator once so replicas share its setup cost.
    pub fn sampler(&self) -> Result<Box<dyn PathSampler>> {
        Ok(match self {
            ProcessSpec::Dmr { a, f_exponent } => Box::new(dmr::Dmr::new(*a, *f_exponent)?),
            ProcessSpec::Circle { frequency, fourier } => Box::new(circle::Circle::new(*frequency, fourier)?),
            ProcessSpec::Arl { .. } => Box::new(arl::Arl::from_spec(self)?),
            ProcessSpec::Pm { gamma, observable, ulam_cells, burn_in } => Box::new(PmSampler {
                chain: pm::PmChain::cached(*gamma, *ulam_cells, *observable)?,
                burn_in: *burn_in,
            }),
            ProcessSpec::Linear { .. } => Box::new(linear::Linear::from_spec(self)?),
            ProcessSpec::Iid { law } => Box::new(iid::Iid::new(*law)?),
        })
    }

    pub fn sample_path(&self, n: usize, seed: SeedStream) -> Result<Path> {
        self.sampler()?.sample_path(n, &mut seed.rng())
    }
}

/// Draws one stationary path.
pub trait PathSampler: Send + Sync {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path>;
}

impl PathSampler for dmr::Dmr {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path> {
        Ok(dmr::Dmr::sample_path(self, n, rng))
    }
}

impl PathSampler for circle::Circle {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path> {
        circle::Circle::sample_path(self, n, rng)
    }
}

impl PathSampler for arl::Arl {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path> {
        Ok(arl::Arl::sample_path(self, n, rng))
    }
}

impl PathSampler for linear::Linear {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path> {
        Ok(Path { states: Vec::new(), values: self.sample(n, rng).values })
    }
}

impl PathSampler for iid::Iid {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path> {
        Ok(iid::Iid::sample_path(self, n, rng))
    }
}

struct PmSampler {
    chain: std::sync::Arc<pm::PmChain>,
    burn_in: u64,
}

impl PathSampler for PmSampler {
    fn sample_path(&self, n: usize, rng: &mut SipRng) -> Result<Path> {
        Ok(self.chain.sample_path(n, self.burn_in, rng))
    }
}

/// One simulated path: `values[k] = X_k` and, for Markov families, the
/// underlying states `states[k] = Y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub states: Vec<f64>,
    pub values: Vec<f64>,
}

/// Closed-form or discretized kernel evaluators for a Markov family with
/// centered observable `f`.
pub trait KernelOracle: Send + Sync {
    fn observable(&self, y: f64) -> Result<f64>;

    /// `K^n f(y) = E(X_n | Y_0 = y)`
    fn iterate(&self, n: u64, y: f64) -> Result<f64>;

    /// `Σ_{i=from}^{to} K^i f(y)`
    fn iterate_sum(&self, from: u64, to: u64, y: f64) -> Result<f64> {
        let mut s = 0.0;
        for i in from..=to {
            s += self.iterate(i, y)?;
        }
        Ok(s)
    }

    /// A bound on `|Σ_{i >= n} K^i f(y)|`, when one is available.
    fn tail_bound(&self, n: u64, y: f64) -> Option<f64>;
}

/// Replicated stationary paths.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub process: ProcessSpec,
    pub values: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub seeds: Vec<SeedStream>,
    pub burn_in: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub family: String,
    pub process: ProcessSpec,
    pub replicas: usize,
    pub n: usize,
    pub burn_in: u64,
    pub seeds: Vec<SeedStream>,
}

impl TrajectoryBatch {
    pub fn replicas(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn metadata(&self) -> BatchMetadata {
        BatchMetadata {
            family: self.process.family().into(),
            process: self.process.clone(),
            replicas: self.replicas(),
            n: self.len(),
            burn_in: self.burn_in,
            seeds: self.seeds.clone(),
        }
    }

    /// Long format: `replica,step,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replica,step,value\n");
        for (r, row) in self.values.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{r},{k},{}", fmt17(*v));
            }
        }
        out
    }
}

/// `replicas` independent stationary paths of length `n`; replica `r` uses
/// stream `r` of `root_seed`.
pub fn simulate(spec: &ProcessSpec, n: usize, replicas: usize, root_seed: u64) -> Result<TrajectoryBatch> {
    if n == 0 || replicas == 0 {
        return Err(invalid("n", "path length and replica count must be positive"));
    }
    spec.validate()?;
    let sampler = spec.sampler()?;
    let paths = map_replicas(root_seed, replicas, |_, seed| sampler.sample_path(n, &mut seed.rng()));
    let mut values = Vec::with_capacity(replicas);
    let mut states = Vec::with_capacity(replicas);
    for p in paths {
        let p = p?;
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(SipError::NonFinite);
        }
        values.push(p.values);
        states.push(p.states);
    }
    Ok(TrajectoryBatch {
        process: spec.clone(),
        values,
        states,
        seeds: (0..replicas as u64).map(|r| SeedStream::new(root_seed, r)).collect(),
        burn_in: spec.burn_in(),
    })
}
