//! Independent draws from a symmetric law, viewed as a chain that forgets
//! its state after one step.

use rand::Rng;

use super::{DiscreteChain, Innovation, KernelOracle, Path, Transition};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iid {
    pub law: Innovation,
}

impl Iid {
    pub fn new(law: Innovation) -> Result<Self> {
        law.validate()?;
        Ok(Iid { law })
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Path {
        let values: Vec<f64> = (0..n).map(|_| self.law.sample(rng)).collect();
        Path { states: values.clone(), values }
    }

    /// Equal-mass quantile atoms, or the exact atoms of a discrete law.
    pub fn discrete_chain(&self, atoms: usize) -> DiscreteChain {
        let states: Vec<f64> = match self.law {
            Innovation::Rademacher => vec![-1.0, 1.0],
            law => (0..atoms).map(|i| law.quantile((i as f64 + 0.5) / atoms as f64)).collect(),
        };
        let m = states.len();
        let weights = vec![1.0 / m as f64; m];
        let mean: f64 = states.iter().sum::<f64>() / m as f64;
        DiscreteChain {
            observable: states.iter().map(|s| s - mean).collect(),
            transition: Transition::RankOne { stay: vec![0.0; m], jump: vec![1.0; m], target: weights.clone() },
            states,
            weights,
        }
    }
}

impl KernelOracle for Iid {
    fn observable(&self, y: f64) -> Result<f64> {
        Ok(y)
    }

    fn iterate(&self, n: u64, y: f64) -> Result<f64> {
        Ok(if n == 0 { y } else { 0.0 })
    }

    fn iterate_sum(&self, from: u64, _to: u64, y: f64) -> Result<f64> {
        Ok(if from == 0 { y } else { 0.0 })
    }

    fn tail_bound(&self, n: u64, y: f64) -> Option<f64> {
        Some(if n == 0 { y.abs() } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn chain_forgets_in_one_step() {
        let iid = Iid::new(Innovation::Gaussian { sd: 1.0 }).unwrap();
        let chain = iid.discrete_chain(64);
        assert!(chain.stationarity_defect() < 1e-14);
        assert!(chain.expect(&chain.observable).abs() < 1e-12);
        let k1 = chain.iterate(1, &chain.observable);
        assert!(k1.iter().all(|v| v.abs() < 1e-12));
        let rad = Iid::new(Innovation::Rademacher).unwrap().discrete_chain(256);
        assert_eq!(rad.states, vec![-1.0, 1.0]);
    }

    #[test]
    fn oracle_is_zero_after_one_step() {
        let iid = Iid::new(Innovation::Rademacher).unwrap();
        assert_eq!(iid.iterate(0, 1.0).unwrap(), 1.0);
        assert_eq!(iid.iterate(3, 1.0).unwrap(), 0.0);
        assert_eq!(iid.iterate_sum(1, 9, -1.0).unwrap(), 0.0);
        let p = iid.sample_path(100, &mut SeedStream::new(0, 0).rng());
        assert!(p.values.iter().all(|v| v.abs() == 1.0));
    }
}
