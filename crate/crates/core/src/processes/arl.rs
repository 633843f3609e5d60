//! Nonlinear autoregression `Y_n = h(Y_{n-1}) + ε_n` with a map whose
//! contraction weakens like `(1+|t|)^{-δ}` far from the origin.

use rand::Rng;

use super::{Innovation, Path, ProcessSpec};
use crate::error::{invalid, Result, SipError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arl {
    pub c: f64,
    pub delta: f64,
    pub s: f64,
    pub innovation: Innovation,
    pub holder: f64,
    pub clip: Option<f64>,
    pub burn_in: u64,
}

impl Arl {
    pub fn new(c: f64, delta: f64, s: f64, innovation: Innovation) -> Result<Self> {
        let arl = Arl { c, delta, s, innovation, holder: 1.0, clip: None, burn_in: 10_000 };
        arl.validate()?;
        Ok(arl)
    }

    pub fn from_spec(spec: &ProcessSpec) -> Result<Self> {
        match *spec {
            ProcessSpec::Arl { c, delta, s, innovation, holder, clip, burn_in } => {
                let arl = Arl { c, delta, s, innovation, holder, clip, burn_in };
                arl.validate()?;
                Ok(arl)
            }
            ref other => Err(invalid("family", format!("expected arl, got {}", other.family()))),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(invalid("c", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(invalid("delta", "must lie in [0, 1)"));
        }
        if !(self.s >= 1.0) {
            return Err(invalid("s", "must be at least 1"));
        }
        self.innovation.validate()?;
        if !self.innovation.has_moment(self.s) {
            return Err(invalid("innovation", format!("moment of order {} is infinite", self.s)));
        }
        if !(self.holder > 0.0 && self.holder <= 1.0) {
            return Err(invalid("holder", "must lie in (0, 1]"));
        }
        if let Some(t) = self.clip {
            if !(t > 0.0) {
                return Err(invalid("clip", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn h(&self, t: f64) -> f64 {
        if self.delta == 0.0 {
            return (1.0 - self.c) * t;
        }
        let e = 1.0 - self.delta;
        t - t.signum() * self.c * ((1.0 + t.abs()).powf(e) - 1.0) / e
    }

    /// `h'(t) = 1 - C (1+|t|)^{-δ}`
    pub fn h_prime(&self, t: f64) -> f64 {
        1.0 - self.c * (1.0 + t.abs()).powf(-self.delta)
    }

    pub fn observable(&self, y: f64) -> f64 {
        let m = match self.clip {
            Some(t) => y.abs().min(t),
            None => y.abs(),
        };
        y.signum() * m.powf(self.holder)
    }

    /// State after `burn_in` steps from 0.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut y = 0.0;
        for _ in 0..self.burn_in {
            y = self.h(y) + self.innovation.sample(rng);
        }
        y
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Path {
        let mut y = self.sample_stationary(rng);
        let mut states = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                y = self.h(y) + self.innovation.sample(rng);
            }
            states.push(y);
        }
        let values = states.iter().map(|y| self.observable(*y)).collect();
        Path { states, values }
    }

    /// `|Y_k - Ȳ_k|` for `k = 0..=n_max`, where both chains share the
    /// innovations `ε_1..ε_n` and start from independent stationary draws.
    pub fn coupled_distances<R: Rng + ?Sized>(&self, n_max: usize, rng: &mut R) -> Vec<f64> {
        let mut y = self.sample_stationary(rng);
        let mut yb = self.sample_stationary(rng);
        let mut out = Vec::with_capacity(n_max + 1);
        out.push((y - yb).abs());
        for _ in 0..n_max {
            let e = self.innovation.sample(rng);
            y = self.h(y) + e;
            yb = self.h(yb) + e;
            out.push((y - yb).abs());
        }
        out
    }

    /// `sup_t |h(t)| / |t|` over a grid away from 0; below 1 means contraction.
    pub fn contraction_on_grid(&self, grid: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &t in grid {
            if t == 0.0 {
                continue;
            }
            let r = self.h(t).abs() / t.abs();
            if !r.is_finite() {
                return Err(SipError::NonFinite);
            }
            worst = worst.max(r);
        }
        Ok(worst)
    }
}
