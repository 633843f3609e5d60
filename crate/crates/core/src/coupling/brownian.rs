use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::rng::SipRng;

/// A Brownian path sampled on a base grid of step `dt`, refined locally by
/// Brownian-bridge midpoint insertion. Refinement never moves a point that
/// has already been sampled.
#[derive(Debug, Clone)]
pub struct BrownianGrid {
    dt: f64,
    times: Vec<f64>,
    values: Vec<f64>,
    /// Base steps generated so far.
    base_steps: u64,
    rng: SipRng,
}

impl BrownianGrid {
    /// Starts at `B(0) = 0`.
    pub fn new(dt: f64, rng: SipRng) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(BrownianGrid { dt, times: vec![0.0], values: vec![0.0], base_steps: 0, rng })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn base_steps(&self) -> u64 {
        self.base_steps
    }

    /// Times of the retained points.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Cumulative values `B(t)` at [`BrownianGrid::times`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of retained points.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends one base step and returns its value.
    pub fn push_step(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        let b = self.values[self.values.len() - 1] + self.dt.sqrt() * z;
        self.base_steps += 1;
        self.times.push(self.base_steps as f64 * self.dt);
        self.values.push(b);
        b
    }

    pub fn extend(&mut self, steps: u64) {
        for _ in 0..steps {
            self.push_step();
        }
    }

    /// Inserts the bridge midpoint between points `i` and `i + 1` and returns
    /// its index.
    pub fn refine(&mut self, i: usize) -> Result<usize> {
        if i + 1 >= self.times.len() {
            return Err(invalid("i", "no point to the right"));
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (b0, b1) = (self.values[i], self.values[i + 1]);
        let z: f64 = self.rng.sample(StandardNormal);
        let b = 0.5 * (b0 + b1) + (0.25 * (t1 - t0)).sqrt() * z;
        self.times.insert(i + 1, 0.5 * (t0 + t1));
        self.values.insert(i + 1, b);
        Ok(i + 1)
    }

    /// Drops the points before index `i`, returning how many were removed.
    pub fn forget_before(&mut self, i: usize) -> usize {
        let i = i.min(self.times.len() - 1);
        self.times.drain(..i);
        self.values.drain(..i);
        i
    }

    /// Uniform draw from the grid's own stream.
    pub(crate) fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

/// Probabilities that a Brownian bridge from `b0` to `b1` over time `h`
/// crosses `hi` and `lo`, each ignoring the other barrier. An end outside
/// the interval crosses with probability one.
pub(crate) fn bridge_exit_probabilities(b0: f64, b1: f64, h: f64, lo: f64, hi: f64) -> (f64, f64) {
    let one_sided = |d0: f64, d1: f64| if d0 <= 0.0 || d1 <= 0.0 { 1.0 } else { (-2.0 * d0 * d1 / h).exp() };
    (one_sided(hi - b0, hi - b1), one_sided(b0 - lo, b1 - lo))
}
