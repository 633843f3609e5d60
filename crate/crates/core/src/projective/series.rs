//! Partial sums of nonnegative series on a dyadic grid, with a tail-exponent
//! fit and a three-way verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stats::ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    NewcondTh22,
    Cond1cobSn,
    Cond1cobSn2,
    Condcarre,
    Cond1cobStar,
    Cond1coralphaphi,
    Cond2coralphaphi,
    Cond2coralpha,
    Cond2coralphaStar,
    Condtheta,
    Condstrong,
    Condalphafort,
    Condfap,
    Lilcond,
    Condcarremart,
    Paroux,
    Synthetic,
}

impl ConditionId {
    pub const ALL: [ConditionId; 17] = [
        ConditionId::NewcondTh22,
        ConditionId::Cond1cobSn,
        ConditionId::Cond1cobSn2,
        ConditionId::Condcarre,
        ConditionId::Cond1cobStar,
        ConditionId::Cond1coralphaphi,
        ConditionId::Cond2coralphaphi,
        ConditionId::Cond2coralpha,
        ConditionId::Cond2coralphaStar,
        ConditionId::Condtheta,
        ConditionId::Condstrong,
        ConditionId::Condalphafort,
        ConditionId::Condfap,
        ConditionId::Lilcond,
        ConditionId::Condcarremart,
        ConditionId::Paroux,
        ConditionId::Synthetic,
    ];

    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

impl Verdict {
    /// The least favourable of two verdicts, for conditions made of several series.
    pub fn worst(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Diverges, _) | (_, Diverges) => Diverges,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Converges,
        }
    }
}

/// Terms decaying faster than `n^(-1-VERDICT_MARGIN)` count as summable,
/// slower than `n^(-1+VERDICT_MARGIN)` as divergent.
pub const VERDICT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostic {
    pub condition_id: ConditionId,
    /// Which series of a multi-part condition this is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub n_max: u64,
    /// Right ends of the dyadic blocks.
    pub grid: Vec<u64>,
    pub partial_sums: Vec<f64>,
    pub block_sums: Vec<f64>,
    /// Fitted `e` in `term(n) ~ n^e`; null when every fitted term vanishes.
    pub term_exponent: Option<f64>,
    pub verdict: Verdict,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn verdict_from_blocks(starts: &[u64], blocks: &[f64]) -> (Option<f64>, Verdict, Vec<String>) {
    let mut notes = Vec::new();
    let from = blocks.len() / 2;
    let upper: Vec<(f64, f64)> = starts[from..]
        .iter()
        .zip(&blocks[from..])
        .map(|(s, b)| (*s as f64, *b))
        .collect();
    if upper.iter().all(|(_, b)| *b == 0.0) {
        notes.push("tail blocks vanish".into());
        return (None, Verdict::Converges, notes);
    }
    let positive: Vec<(f64, f64)> = upper.iter().copied().filter(|(_, b)| *b > 0.0).collect();
    if positive.len() < 3 {
        notes.push("too few nonzero tail blocks to fit".into());
        return (None, Verdict::Inconclusive, notes);
    }
    let xs: Vec<f64> = positive.iter().map(|(s, _)| s.ln()).collect();
    let ys: Vec<f64> = positive.iter().map(|(_, b)| b.ln()).collect();
    let fit = match ols(&xs, &ys) {
        Ok(f) => f,
        Err(_) => return (None, Verdict::Inconclusive, vec!["tail fit failed".into()]),
    };
    let exponent = fit.slope - 1.0;
    let last = positive.last().unwrap().1;
    let first = positive[0].1;
    let verdict = if exponent < -1.0 - VERDICT_MARGIN {
        if last <= first {
            Verdict::Converges
        } else {
            notes.push("block sums still growing".into());
            Verdict::Inconclusive
        }
    } else if exponent > -1.0 + VERDICT_MARGIN {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    (Some(exponent), verdict, notes)
}

fn cumulative(blocks: &[f64]) -> Vec<f64> {
    blocks
        .iter()
        .scan(0.0, |acc, b| {
            *acc += b;
            Some(*acc)
        })
        .collect()
}

impl SeriesDiagnostic {
    /// Sums `term(n)` exactly for `1 <= n <= n_max`, in blocks `[2^j, 2^{j+1})`.
    ///
    /// Terms must be nonnegative; negative or non-finite terms are recorded as
    /// a note and counted as zero.
    pub fn from_terms<F: Fn(u64) -> f64>(
        condition_id: ConditionId,
        params: BTreeMap<String, f64>,
        term: F,
        n_max: u64,
    ) -> Self {
        let mut starts = Vec::new();
        let mut blocks = Vec::new();
        let mut bad = 0usize;
        let mut lo = 1u64;
        while lo <= n_max {
            let hi = (2 * lo - 1).min(n_max);
            let mut s = 0.0;
            for n in lo..=hi {
                let t = term(n);
                if t.is_finite() && t >= 0.0 {
                    s += t;
                } else {
                    bad += 1;
                }
            }
            starts.push(lo);
            blocks.push(s);
            lo *= 2;
        }
        let mut d = Self::from_block_sums(condition_id, params, &starts, &blocks, n_max);
        if bad > 0 {
            d.notes.push(format!("{bad} invalid terms counted as zero"));
        }
        d
    }

    /// Builds the diagnostic from precomputed block sums over `[starts[j], starts[j+1])`.
    pub fn from_block_sums(
        condition_id: ConditionId,
        params: BTreeMap<String, f64>,
        starts: &[u64],
        block_sums: &[f64],
        n_max: u64,
    ) -> Self {
        let grid: Vec<u64> = starts
            .iter()
            .enumerate()
            .map(|(j, _)| starts.get(j + 1).map(|s| s - 1).unwrap_or(n_max))
            .collect();
        // A trailing block cut short by n_max would bias the fit.
        let complete = match starts.last() {
            Some(&s) if starts.len() > 1 && n_max < 2 * s - 1 => starts.len() - 1,
            _ => starts.len(),
        };
        let (term_exponent, verdict, notes) = verdict_from_blocks(&starts[..complete], &block_sums[..complete]);
        SeriesDiagnostic {
            condition_id,
            part: None,
            params,
            n_max,
            grid,
            partial_sums: cumulative(block_sums),
            block_sums: block_sums.to_vec(),
            term_exponent,
            verdict,
            notes,
        }
    }

    /// Terms known only at dyadic points `ns`; each block is the integral of
    /// the log-linear interpolant between neighbouring points, and the last
    /// point's term stands for itself.
    pub fn from_grid(condition_id: ConditionId, params: BTreeMap<String, f64>, ns: &[u64], terms: &[f64]) -> Self {
        let mut blocks = Vec::with_capacity(ns.len());
        for j in 0..ns.len() {
            let t0 = terms[j].max(0.0);
            if j + 1 == ns.len() {
                blocks.push(t0);
                break;
            }
            let (n0, n1) = (ns[j] as f64, ns[j + 1] as f64);
            let t1 = terms[j + 1].max(0.0);
            let b = if t0 > 0.0 && t1 > 0.0 {
                let slope = (t1 / t0).ln() / (n1 / n0).ln();
                if (slope + 1.0).abs() < 1e-12 {
                    t0 * n0 * (n1 / n0).ln()
                } else {
                    t0 * n0 * ((n1 / n0).powf(slope + 1.0) - 1.0) / (slope + 1.0)
                }
            } else {
                0.5 * (t0 + t1) * (n1 - n0)
            };
            blocks.push(b);
        }
        let n_max = *ns.last().unwrap_or(&0);
        let mut d = Self::from_block_sums(condition_id, params, ns, &blocks, n_max);
        d.grid = ns.to_vec();
        // The block fit divides out the block width; on a non-dyadic grid fit terms directly.
        let from = ns.len() / 2;
        let pts: Vec<(f64, f64)> = ns[from..]
            .iter()
            .zip(&terms[from..])
            .filter(|(_, t)| **t > 0.0)
            .map(|(n, t)| ((*n as f64).ln(), t.ln()))
            .collect();
        if pts.len() >= 3 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Ok(fit) = ols(&xs, &ys) {
                let e = fit.slope;
                d.term_exponent = Some(e);
                d.verdict = if e < -1.0 - VERDICT_MARGIN {
                    Verdict::Converges
                } else if e > -1.0 + VERDICT_MARGIN {
                    Verdict::Diverges
                } else {
                    Verdict::Inconclusive
                };
            }
        }
        d
    }

    pub fn with_part(mut self, part: &str) -> Self {
        self.part = Some(part.to_owned());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn power(e: f64, n_max: u64) -> SeriesDiagnostic {
        SeriesDiagnostic::from_terms(ConditionId::Synthetic, BTreeMap::new(), |n| (n as f64).powf(e), n_max)
    }

    #[test]
    fn power_law_verdicts() {
        assert_eq!(power(-1.5, 1 << 16).verdict, Verdict::Converges);
        assert_eq!(power(-0.7, 1 << 16).verdict, Verdict::Diverges);
        assert_eq!(power(-1.0, 1 << 16).verdict, Verdict::Inconclusive);
        let e = power(-1.3, 1 << 18).term_exponent.unwrap();
        assert!((e + 1.3).abs() < 0.01, "{e}");
    }

    #[test]
    fn vanishing_terms() {
        let d = SeriesDiagnostic::from_terms(ConditionId::Synthetic, BTreeMap::new(), |_| 0.0, 1024);
        assert_eq!(d.verdict, Verdict::Converges);
        assert_eq!(d.term_exponent, None);
        assert!(d.partial_sums.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn grid_form_matches_exact_sums() {
        let ns: Vec<u64> = (3..=16).map(|j| 1u64 << j).collect();
        let ts: Vec<f64> = ns.iter().map(|n| (*n as f64).powf(-1.4)).collect();
        let d = SeriesDiagnostic::from_grid(ConditionId::Synthetic, BTreeMap::new(), &ns, &ts);
        assert_eq!(d.verdict, Verdict::Converges);
        assert!((d.term_exponent.unwrap() + 1.4).abs() < 1e-9);
    }

    #[test]
    fn json_shape() {
        let d = power(-2.0, 64);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["condition_id"], "synthetic");
        assert_eq!(v["verdict"], "converges");
        assert!(v["partial_sums"].is_array());
        assert_eq!(ConditionId::parse("condstrong"), Some(ConditionId::Condstrong));
        assert_eq!(ConditionId::NewcondTh22.name(), "newcond_th22");
    }

    proptest! {
        #[test]
        fn partial_sums_nondecreasing(e in -3.0f64..0.5) {
            let d = power(e, 4096);
            prop_assert!(d.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn doubling_n_max_keeps_verdict(e in prop::sample::select(vec![-1.9, -1.6, -1.3, -1.2, -0.8, -0.7, -0.4, -0.1])) {
            prop_assert_eq!(power(e, 1 << 14).verdict, power(e, 1 << 15).verdict);
        }
    }
}
