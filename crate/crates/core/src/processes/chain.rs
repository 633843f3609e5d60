//! Finite-state approximations of Markov kernels: a stationary weight vector,
//! a transition operator and the centered observable at each state.

use rayon::prelude::*;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row entries, merging duplicate columns.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `x^T A`
    pub fn vecmat(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                for (c, v) in self.row(i) {
                    out[c] += xi * v;
                }
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    /// `K g(i) = stay_i g(i) + jump_i Σ_j target_j g(j)`
    RankOne { stay: Vec<f64>, jump: Vec<f64>, target: Vec<f64> },
    Sparse(Csr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChain {
    /// Representative state of each cell, ascending.
    pub states: Vec<f64>,
    /// Stationary probabilities.
    pub weights: Vec<f64>,
    pub transition: Transition,
    /// Centered observable at each state.
    pub observable: Vec<f64>,
}

impl DiscreteChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `K g`
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        match &self.transition {
            Transition::RankOne { stay, jump, target } => {
                let m: f64 = target.iter().zip(g).map(|(t, v)| t * v).sum();
                (0..g.len()).map(|i| stay[i] * g[i] + jump[i] * m).collect()
            }
            Transition::Sparse(k) => k.matvec(g),
        }
    }

    /// `μ K`
    pub fn push(&self, mu: &[f64]) -> Vec<f64> {
        match &self.transition {
            Transition::RankOne { stay, jump, target } => {
                let flow: f64 = mu.iter().zip(jump).map(|(m, j)| m * j).sum();
                (0..mu.len()).map(|i| mu[i] * stay[i] + target[i] * flow).collect()
            }
            Transition::Sparse(k) => k.vecmat(mu),
        }
    }

    /// `K^n g`
    pub fn iterate(&self, n: u64, g: &[f64]) -> Vec<f64> {
        let mut v = g.to_vec();
        for _ in 0..n {
            v = self.apply(&v);
        }
        v
    }

    pub fn expect(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }

    /// `(Σ_i w_i |g_i|^p)^{1/p}`
    pub fn lp_norm(&self, g: &[f64], p: f64) -> f64 {
        let s: f64 = self.weights.iter().zip(g).map(|(w, v)| w * v.abs().powf(p)).sum();
        s.powf(1.0 / p)
    }

    /// `Σ_i w_i |g_i - E g|`
    pub fn l1_centered(&self, g: &[f64]) -> f64 {
        let m = self.expect(g);
        self.weights.iter().zip(g).map(|(w, v)| w * (v - m).abs()).sum()
    }

    /// `‖w K - w‖_1`
    pub fn stationarity_defect(&self) -> f64 {
        self.push(&self.weights).iter().zip(&self.weights).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Stationary mass of states `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.states.partition_point(|s| *s <= x);
        self.weights[..k].iter().sum()
    }

    /// Thresholds splitting the states at levels `j/(count+1)` of the
    /// stationary law, placed midway between neighbouring states.
    pub fn quantile_thresholds(&self, count: usize) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cum.push(acc);
        }
        let mut out: Vec<f64> = (1..=count)
            .filter_map(|j| {
                let u = j as f64 / (count + 1) as f64;
                let i = cum.partition_point(|c| *c < u);
                (i + 1 < self.len()).then(|| 0.5 * (self.states[i] + self.states[i + 1]))
            })
            .collect();
        out.dedup();
        out
    }

    /// `E(S_n | Y_0)` at each state for every `n` in the ascending grid, with
    /// `S_n = X_1 + … + X_n`.
    pub fn conditional_sums(&self, grid: &[u64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut b = vec![0.0; self.len()];
        let mut level = 0u64;
        for &n in grid {
            while level < n {
                let s: Vec<f64> = self.observable.iter().zip(&b).map(|(f, v)| f + v).collect();
                b = self.apply(&s);
                level += 1;
            }
            out.push(b.clone());
        }
        out
    }

    /// `(E(S_n | Y_0), E(S_n^2 | Y_0))` for every `n` in the ascending grid.
    pub fn conditional_moments(&self, grid: &[u64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let m = self.len();
        let f = &self.observable;
        let mut out = Vec::with_capacity(grid.len());
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut level = 0u64;
        for &n in grid {
            while level < n {
                let sq: Vec<f64> = (0..m).map(|i| f[i] * f[i] + 2.0 * f[i] * b[i] + c[i]).collect();
                let lin: Vec<f64> = (0..m).map(|i| f[i] + b[i]).collect();
                c = self.apply(&sq);
                b = self.apply(&lin);
                level += 1;
            }
            out.push((b.clone(), c.clone()));
        }
        out
    }

    /// Rows of `K^n` (the law after `n` steps from each state) for every
    /// `n` in the ascending grid. Dense, so meant for small chains.
    pub fn transition_rows(&self, grid: &[u64]) -> Vec<Vec<Vec<f64>>> {
        let m = self.len();
        let mut rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                e
            })
            .collect();
        let mut out = Vec::with_capacity(grid.len());
        let mut level = 0u64;
        for &n in grid {
            if n > level {
                let steps = n - level;
                rows = rows
                    .into_par_iter()
                    .map(|mut r| {
                        for _ in 0..steps {
                            r = self.push(&r);
                        }
                        r
                    })
                    .collect();
                level = n;
            }
            out.push(rows.clone());
        }
        out
    }
}
