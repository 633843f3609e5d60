//! Gaussian partners for simulated partial sums and the growth of their
//! sup-deviation.
//!
//! Two constructions are available. The per-step quantile coupling maps each
//! increment through its conditional distribution function; it has exact
//! Gaussian marginals but its deviation grows like `√n` even for iid inputs.
//! The Skorokhod construction stops one Brownian motion at successive
//! randomized two-point exit times, so the martingale part is read off the
//! Brownian path and the Gaussian partners are its increments over fixed
//! slots of length `σ²`.

pub mod brownian;
pub mod embed;
pub mod source;

use serde::{Deserialize, Serialize};

pub use brownian::BrownianGrid;
pub use embed::{quantile_couple, skorokhod_embed, skorokhod_embed_iid, AtomPolicy, Embedding, QuantileCoupling};
pub use source::{AnySource, DmrSource, IidSource, MartingaleSource, Step};

use crate::error::{invalid, Result, SipError};
use crate::processes::ProcessSpec;
use crate::rng::{map_replicas, SeedStream};
use crate::stats::{fmt17, loglog_rate_fit, mean, median, std_error, RateFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMethod {
    QuantilePerStep,
    SkorokhodExit,
}

impl CouplingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingMethod::QuantilePerStep => "quantile-per-step",
            CouplingMethod::SkorokhodExit => "skorokhod-exit",
        }
    }
}

/// Diagnostics of the Skorokhod construction, aggregated over replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSummary {
    /// Mean of `τ_i` over all steps and replicas.
    pub mean_stopping_time: f64,
    pub stopping_time_stderr: f64,
    /// Largest `|M_k - B(T_k)|` seen.
    pub max_embedding_error: f64,
    /// Largest per-step truncated mass of the increment law.
    pub truncated_mass: f64,
    /// Mean over replicas of `max_{k <= n} |M_k - B(kσ²)|` at each horizon.
    pub martingale_sup_dev: Vec<f64>,
    pub martingale_rate_fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub method: CouplingMethod,
    pub horizons: Vec<u64>,
    /// Mean over replicas of `max_{k <= n} |S_k - Σ_{i<=k} Z_i|`.
    pub mean_sup_dev: Vec<f64>,
    pub median_sup_dev: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Raw values, one row per replica.
    pub sup_dev: Vec<Vec<f64>>,
    pub sigma2_used: f64,
    /// Log-log fit of the mean sup-deviation; absent when it vanishes.
    pub rate_fit: Option<RateFit>,
    #[serde(default)]
    pub embedding: Option<EmbeddingSummary>,
}

impl CouplingResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon,mean_sup_dev,median,stderr\n");
        for (i, n) in self.horizons.iter().enumerate() {
            out.push_str(&format!(
                "{n},{},{},{}\n",
                fmt17(self.mean_sup_dev[i]),
                fmt17(self.median_sup_dev[i]),
                fmt17(self.stderr[i])
            ));
        }
        out
    }
}

fn check_horizons(horizons: &[u64], len: usize) -> Result<()> {
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("horizons", "must be positive and strictly increasing"));
    }
    if *horizons.last().unwrap() as usize > len {
        return Err(invalid("horizons", format!("exceed the path length {len}")));
    }
    Ok(())
}

/// `max_{k <= n} |Σ_{i<=k} (x_i - z_i)|` at each horizon `n`.
pub fn sup_deviation(x: &[f64], z: &[f64], horizons: &[u64]) -> Result<Vec<f64>> {
    if x.len() != z.len() {
        return Err(SipError::LengthMismatch { left: x.len(), right: z.len() });
    }
    check_horizons(horizons, x.len())?;
    let mut out = Vec::with_capacity(horizons.len());
    let (mut acc, mut run) = (0.0f64, 0.0f64);
    let mut h = horizons.iter().peekable();
    for (k, (a, b)) in x.iter().zip(z).enumerate() {
        acc += a - b;
        run = run.max(acc.abs());
        if h.peek() == Some(&&(k as u64 + 1)) {
            out.push(run);
            h.next();
        }
    }
    Ok(out)
}

/// Aggregates per-replica sup-deviations of paired increment paths.
pub fn measure_sup_deviation(
    x_paths: &[Vec<f64>],
    z_paths: &[Vec<f64>],
    horizons: &[u64],
    method: CouplingMethod,
    sigma2: f64,
) -> Result<CouplingResult> {
    if x_paths.len() != z_paths.len() {
        return Err(SipError::LengthMismatch { left: x_paths.len(), right: z_paths.len() });
    }
    let rows = x_paths.iter().zip(z_paths).map(|(x, z)| sup_deviation(x, z, horizons)).collect::<Result<Vec<_>>>()?;
    aggregate(rows, horizons, method, sigma2, None)
}

fn columns(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn fit(horizons: &[u64], ys: &[f64]) -> Option<RateFit> {
    let ns: Vec<f64> = horizons.iter().map(|n| *n as f64).collect();
    loglog_rate_fit(&ns, ys).ok()
}

fn aggregate(
    rows: Vec<Vec<f64>>,
    horizons: &[u64],
    method: CouplingMethod,
    sigma2: f64,
    embedding: Option<EmbeddingSummary>,
) -> Result<CouplingResult> {
    if rows.is_empty() {
        return Err(SipError::EmptySample);
    }
    let cols: Vec<Vec<f64>> = (0..horizons.len()).map(|j| columns(&rows, j)).collect();
    let mean_sup_dev: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let median_sup_dev = cols.iter().map(|c| median(c)).collect();
    let stderr = cols.iter().map(|c| if c.len() > 1 { std_error(c) } else { 0.0 }).collect();
    Ok(CouplingResult {
        method,
        horizons: horizons.to_vec(),
        rate_fit: fit(horizons, &mean_sup_dev),
        mean_sup_dev,
        median_sup_dev,
        stderr,
        sup_dev: rows,
        sigma2_used: sigma2,
        embedding,
    })
}

/// Replica outputs before aggregation.
struct ReplicaRun {
    sup_dev: Vec<f64>,
    martingale_sup_dev: Vec<f64>,
    tau_sum: f64,
    tau_sq_sum: f64,
    embedding_error: f64,
    truncated_mass: f64,
}

fn quantile_replica<S: MartingaleSource>(src: &S, n: usize, sigma2: f64, horizons: &[u64], seed: SeedStream) -> Result<ReplicaRun> {
    let mut rng = seed.substream(1).rng();
    let mut state = src.start(&mut rng);
    let mut prev = Vec::with_capacity(n);
    let (mut d, mut x) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let s = src.step(state, &mut rng)?;
        prev.push(state);
        d.push(s.d);
        x.push(s.x);
        state = s.state;
    }
    let mut urng = seed.substream(2).rng();
    let q = quantile_couple(&d, |i| src.conditional_law(prev[i]), sigma2, AtomPolicy::Randomize, &mut urng)?;
    Ok(ReplicaRun {
        sup_dev: sup_deviation(&x, &q.z, horizons)?,
        martingale_sup_dev: sup_deviation(&d, &q.z, horizons)?,
        tau_sum: 0.0,
        tau_sq_sum: 0.0,
        embedding_error: 0.0,
        truncated_mass: 0.0,
    })
}

fn skorokhod_replica(src: &AnySource, n: usize, sigma2: f64, horizons: &[u64], seed: SeedStream) -> Result<ReplicaRun> {
    let mut rng = seed.substream(1).rng();
    let mut bm = BrownianGrid::new(sigma2 / f64::from(embed::BASE_DIVISIONS), seed.substream(2).rng())?;
    let e = match src {
        AnySource::Iid(s) => skorokhod_embed_iid(s, n, sigma2, &mut bm, &mut rng)?,
        AnySource::Dmr(s) => skorokhod_embed(s, n, sigma2, &mut bm, &mut rng)?,
    };
    Ok(ReplicaRun {
        sup_dev: sup_deviation(&e.x, &e.z, horizons)?,
        martingale_sup_dev: sup_deviation(&e.d, &e.z, horizons)?,
        tau_sum: e.stopping_times.iter().sum(),
        tau_sq_sum: e.stopping_times.iter().map(|t| t * t).sum(),
        embedding_error: e.embedding_error,
        truncated_mass: e.truncated_mass,
    })
}

/// Couples `replicas` independent paths of the process up to the largest
/// horizon. Replica `r` draws from stream `r` of `root_seed`.
pub fn couple(spec: &ProcessSpec, method: CouplingMethod, horizons: &[u64], replicas: usize, root_seed: u64) -> Result<CouplingResult> {
    if replicas == 0 {
        return Err(invalid("replicas", "must be positive"));
    }
    check_horizons(horizons, usize::MAX)?;
    let n = *horizons.last().unwrap() as usize;
    let src = AnySource::from_spec(spec)?;
    let sigma2 = match &src {
        AnySource::Iid(s) => s.sigma2()?,
        AnySource::Dmr(s) => s.sigma2()?,
    };
    let runs = map_replicas(root_seed, replicas, |_, seed| match (method, &src) {
        (CouplingMethod::QuantilePerStep, AnySource::Iid(s)) => quantile_replica(s, n, sigma2, horizons, seed),
        (CouplingMethod::QuantilePerStep, AnySource::Dmr(s)) => quantile_replica(s, n, sigma2, horizons, seed),
        (CouplingMethod::SkorokhodExit, s) => skorokhod_replica(s, n, sigma2, horizons, seed),
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mart: Vec<Vec<f64>> = runs.iter().map(|r| r.martingale_sup_dev.clone()).collect();
    let mart_mean: Vec<f64> = (0..horizons.len()).map(|j| mean(&columns(&mart, j))).collect();
    let embedding = (method == CouplingMethod::SkorokhodExit).then(|| {
        let steps = (n * replicas) as f64;
        let tau_mean = runs.iter().map(|r| r.tau_sum).sum::<f64>() / steps;
        let tau_sq = runs.iter().map(|r| r.tau_sq_sum).sum::<f64>() / steps;
        EmbeddingSummary {
            mean_stopping_time: tau_mean,
            stopping_time_stderr: ((tau_sq - tau_mean * tau_mean).max(0.0) / steps).sqrt(),
            max_embedding_error: runs.iter().map(|r| r.embedding_error).fold(0.0, f64::max),
            truncated_mass: runs.iter().map(|r| r.truncated_mass).fold(0.0, f64::max),
            martingale_rate_fit: fit(horizons, &mart_mean),
            martingale_sup_dev: mart_mean,
        }
    });
    let rows = runs.into_iter().map(|r| r.sup_dev).collect();
    aggregate(rows, horizons, method, sigma2, embedding)
}
