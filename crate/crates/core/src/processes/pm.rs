//! Intermittent map `T(x) = x(1 + 2^γ x^γ)` on `[0, 1/2)`, `2x - 1` on
//! `[1/2, 1]`, and the Markov chain running its orbits backwards.
//!
//! The kernel is approximated by Ulam's method on a partition that is
//! logarithmic near the neutral fixed point, so that long laminar phases
//! are resolved.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;

use super::{Csr, DiscreteChain, KernelOracle, Path, PmObservable, Transition};
use crate::error::{invalid, Result, SipError};

/// Left edge of the logarithmic part of the partition.
pub const INNER_EDGE: f64 = 1e-10;
const LOG_PART_END: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmMap {
    pub gamma: f64,
    scale: f64,
}

impl PmMap {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1)"));
        }
        Ok(PmMap { gamma, scale: 2f64.powf(gamma) })
    }

    pub fn apply(&self, x: f64) -> f64 {
        if x < 0.5 {
            x * (1.0 + self.scale * x.powf(self.gamma))
        } else {
            2.0 * x - 1.0
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x < 0.5 {
            1.0 + (1.0 + self.gamma) * self.scale * x.powf(self.gamma)
        } else {
            2.0
        }
    }

    /// Preimage of `y` in `[0, 1/2]`. Newton from `y` decreases monotonically
    /// to the root since the branch is convex and lies above the diagonal.
    pub fn left_inverse(&self, y: f64) -> Option<f64> {
        if y <= 0.0 {
            return Some(0.0);
        }
        if y >= 1.0 {
            return Some(0.5);
        }
        let branch = |x: f64| x * (1.0 + self.scale * x.powf(self.gamma));
        let slope = |x: f64| 1.0 + (1.0 + self.gamma) * self.scale * x.powf(self.gamma);
        let mut x = y.min(0.5);
        for _ in 0..200 {
            let step = (branch(x) - y) / slope(x);
            x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x {
                return Some(x.clamp(0.0, 0.5));
            }
        }
        None
    }

    pub fn right_inverse(&self, y: f64) -> f64 {
        0.5 * (y + 1.0)
    }
}

/// Cell edges: a first cell `[0, INNER_EDGE)`, logarithmic cells up to 1/64,
/// then uniform cells on `[1/64, 1/2]` and on `[1/2, 1]`.
pub fn partition(cells: usize) -> Vec<f64> {
    let n_log = 3 * cells / 8;
    let n_mid = cells / 4;
    let n_right = cells - n_log - n_mid;
    let mut edges = Vec::with_capacity(cells + 1);
    edges.push(0.0);
    let ratio = (LOG_PART_END / INNER_EDGE).ln();
    for i in 0..n_log {
        edges.push(INNER_EDGE * (ratio * i as f64 / (n_log - 1) as f64).exp());
    }
    *edges.last_mut().unwrap() = LOG_PART_END;
    for i in 1..=n_mid {
        edges.push(LOG_PART_END + (0.5 - LOG_PART_END) * i as f64 / n_mid as f64);
    }
    *edges.last_mut().unwrap() = 0.5;
    for i in 1..=n_right {
        edges.push(0.5 + 0.5 * i as f64 / n_right as f64);
    }
    *edges.last_mut().unwrap() = 1.0;
    edges
}

/// Ulam discretization of the map with its stationary cell masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Ulam {
    pub map: PmMap,
    pub edges: Vec<f64>,
    /// `P_ij = |C_i ∩ T^{-1} C_j| / |C_i|`
    pub forward: Csr,
    /// Stationary mass of each cell.
    pub mass: Vec<f64>,
    /// Time reversal `K_ji = mass_i P_ij / mass_j`.
    pub reversed: Csr,
}

/// Overlap lengths of two partitions of the same interval.
fn overlay(a: &[f64], b: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
    let (mut i, mut j) = (0, 0);
    while i + 1 < a.len() && j + 1 < b.len() {
        let lo = a[i].max(b[j]);
        let hi = a[i + 1].min(b[j + 1]);
        if hi > lo {
            emit(i, j, hi - lo);
        }
        if a[i + 1] < b[j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Stationary vector of an irreducible row-stochastic matrix by
/// Grassmann-Taksar-Heyman elimination (no subtractions).
pub fn gth_stationary(mut p: Vec<Vec<f64>>) -> Vec<f64> {
    let n = p.len();
    for k in (1..n).rev() {
        let s: f64 = p[k][..k].iter().sum();
        let (head, tail) = p.split_at_mut(k);
        let pivot = &tail[0];
        head.par_iter_mut().for_each(|row| {
            let w = row[k] / s;
            row[k] = w;
            if w != 0.0 {
                for (x, y) in row[..k].iter_mut().zip(&pivot[..k]) {
                    *x += w * y;
                }
            }
        });
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * p[i][j]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|x| x / total).collect()
}

impl Ulam {
    pub fn new(gamma: f64, cells: usize) -> Result<Self> {
        let map = PmMap::new(gamma)?;
        if cells < 64 {
            return Err(invalid("ulam_cells", "must be at least 64"));
        }
        let edges = partition(cells);
        let half = edges.iter().position(|e| *e == 0.5).expect("1/2 is an edge");
        let mut left_pre = Vec::with_capacity(edges.len());
        for (j, e) in edges.iter().enumerate() {
            left_pre.push(map.left_inverse(*e).ok_or(SipError::NewtonFailure { cell: j })?);
        }
        let right_pre: Vec<f64> = edges.iter().map(|e| map.right_inverse(*e)).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells];
        overlay(&edges[..=half], &left_pre, |i, j, len| rows[i].push((j, len)));
        overlay(&edges[half..], &right_pre, |i, j, len| rows[half + i].push((j, len)));
        for (i, row) in rows.iter_mut().enumerate() {
            let width = edges[i + 1] - edges[i];
            let total: f64 = row.iter().map(|e| e.1).sum();
            debug_assert!((total - width).abs() <= 1e-9 * width);
            for e in row.iter_mut() {
                e.1 /= total;
            }
        }
        let forward = Csr::from_rows(rows);
        let mut dense = vec![vec![0.0; cells]; cells];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in forward.row(i) {
                row[j] = v;
            }
        }
        let mass = gth_stationary(dense);
        let mut rev: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cells];
        for i in 0..cells {
            for (j, v) in forward.row(i) {
                rev[j].push((i, mass[i] * v / mass[j]));
            }
        }
        for row in rev.iter_mut() {
            let total: f64 = row.iter().map(|e| e.1).sum();
            for e in row.iter_mut() {
                e.1 /= total;
            }
        }
        Ok(Ulam { map, edges, forward, mass, reversed: Csr::from_rows(rev) })
    }

    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    pub fn cell_of(&self, x: f64) -> usize {
        (self.edges.partition_point(|e| *e <= x).max(1) - 1).min(self.cells() - 1)
    }

    /// Invariant density on each cell.
    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().enumerate().map(|(i, m)| m / (self.edges[i + 1] - self.edges[i])).collect()
    }

    /// OLS slope of log density against log cell midpoint for cells inside `(lo, hi)`.
    pub fn log_density_slope(&self, lo: f64, hi: f64) -> Result<f64> {
        let h = self.density();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in 0..self.cells() {
            if self.edges[i] >= lo && self.edges[i + 1] <= hi {
                xs.push((0.5 * (self.edges[i] + self.edges[i + 1])).ln());
                ys.push(h[i].ln());
            }
        }
        Ok(crate::stats::ols(&xs, &ys)?.slope)
    }

    /// Cell average of the observable, assuming a flat density inside the cell.
    fn cell_average(&self, obs: PmObservable, i: usize) -> f64 {
        let (a, b) = (self.edges[i], self.edges[i + 1]);
        match obs {
            PmObservable::Indicator { threshold } => ((threshold.clamp(a, b) - a) / (b - a)).clamp(0.0, 1.0),
            PmObservable::Power { exponent } => {
                (b.powf(exponent + 1.0) - a.powf(exponent + 1.0)) / ((exponent + 1.0) * (b - a))
            }
        }
    }
}

/// Stationary chain with kernel `K_γ` and a centered observable.
#[derive(Debug, Clone, PartialEq)]
pub struct PmChain {
    pub ulam: Arc<Ulam>,
    pub observable: PmObservable,
    /// Stationary mean of the raw observable.
    pub mean: f64,
    /// Centered observable averaged over each cell.
    pub cell_values: Vec<f64>,
}

type UlamKey = (u64, usize);

fn ulam_cache() -> &'static Mutex<HashMap<UlamKey, Arc<Ulam>>> {
    static CACHE: OnceLock<Mutex<HashMap<UlamKey, Arc<Ulam>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl PmChain {
    pub fn new(ulam: Arc<Ulam>, observable: PmObservable) -> Result<Self> {
        match observable {
            PmObservable::Indicator { threshold } if !(threshold > 0.0 && threshold < 1.0) => {
                return Err(invalid("threshold", "must lie in (0, 1)"))
            }
            PmObservable::Power { exponent } if !(exponent > 0.0) => {
                return Err(invalid("exponent", "must be positive"))
            }
            _ => {}
        }
        let raw: Vec<f64> = (0..ulam.cells()).map(|i| ulam.cell_average(observable, i)).collect();
        let mean: f64 = raw.iter().zip(&ulam.mass).map(|(v, m)| v * m).sum();
        let cell_values = raw.iter().map(|v| v - mean).collect();
        Ok(PmChain { ulam, observable, mean, cell_values })
    }

    /// Shares the Ulam discretization between calls with the same `(γ, cells)`.
    pub fn cached(gamma: f64, cells: usize, observable: PmObservable) -> Result<Arc<Self>> {
        PmMap::new(gamma)?;
        let key = (gamma.to_bits(), cells);
        let existing = ulam_cache().lock().expect("cache lock").get(&key).cloned();
        let ulam = match existing {
            Some(u) => u,
            None => {
                let u = Arc::new(Ulam::new(gamma, cells)?);
                ulam_cache().lock().expect("cache lock").entry(key).or_insert(u).clone()
            }
        };
        Ok(Arc::new(Self::new(ulam, observable)?))
    }

    pub fn raw_observable(&self, x: f64) -> f64 {
        match self.observable {
            PmObservable::Indicator { threshold } => f64::from(u8::from(x <= threshold)),
            PmObservable::Power { exponent } => x.powf(exponent),
        }
    }

    pub fn discrete_chain(&self) -> DiscreteChain {
        let e = &self.ulam.edges;
        DiscreteChain {
            states: (0..self.ulam.cells()).map(|i| 0.5 * (e[i] + e[i + 1])).collect(),
            weights: self.ulam.mass.clone(),
            transition: Transition::Sparse(self.ulam.reversed.clone()),
            observable: self.cell_values.clone(),
        }
    }

    /// Forward orbit after a burn-in from a uniform start, reversed.
    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, burn_in: u64, rng: &mut R) -> Path {
        let map = &self.ulam.map;
        let step = |x: f64, rng: &mut R| {
            let y = map.apply(x);
            // The doubling branch keeps no fresh low bits; keep clear of the fixed points.
            if y <= 0.0 {
                f64::EPSILON * (0.5 + rng.random::<f64>())
            } else if y >= 1.0 {
                1.0 - f64::EPSILON * (0.5 + rng.random::<f64>())
            } else {
                y
            }
        };
        let mut x: f64 = rng.random();
        for _ in 0..burn_in {
            x = step(x, rng);
        }
        let mut states = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                x = step(x, rng);
            }
            states.push(x);
        }
        states.reverse();
        let values = states.iter().map(|x| self.raw_observable(*x) - self.mean).collect();
        Path { states, values }
    }

    fn iterate_cells(&self, n: u64) -> Vec<f64> {
        let mut v = self.cell_values.clone();
        for _ in 0..n {
            v = self.ulam.reversed.matvec(&v);
        }
        v
    }
}

impl KernelOracle for PmChain {
    fn observable(&self, y: f64) -> Result<f64> {
        Ok(self.raw_observable(y) - self.mean)
    }

    fn iterate(&self, n: u64, y: f64) -> Result<f64> {
        if n == 0 {
            return self.observable(y);
        }
        Ok(self.iterate_cells(n)[self.ulam.cell_of(y)])
    }

    fn iterate_sum(&self, from: u64, to: u64, y: f64) -> Result<f64> {
        let cell = self.ulam.cell_of(y);
        let mut v = self.cell_values.clone();
        let mut s = 0.0;
        for i in 0..=to {
            if i >= from {
                s += if i == 0 { self.observable(y)? } else { v[cell] };
            }
            v = self.ulam.reversed.matvec(&v);
        }
        Ok(s)
    }

    fn tail_bound(&self, _n: u64, _y: f64) -> Option<f64> {
        None
    }
}
