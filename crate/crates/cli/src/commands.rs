use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use siplab::coupling::{couple, CouplingMethod};
use siplab::dependence::{alpha_coefficient, gamma_binned_mc, gamma_exact, tau_coupling, theta2_lambda2, CoefficientCurve, Estimator};
use siplab::processes::{dmr::Dmr, simulate, DiscreteChain, Path, ProcessSpec};
use siplab::projective::conditions::{evaluate_condition, ConditionOutcome, ProcessSource};
use siplab::projective::norms::{projective_norm_esn, projective_norm_esn2};
use siplab::projective::{build_decomposition, four_term_residual, verify_projection_tail, ConditionId};
use siplab::stats::{fmt17, mean};

use crate::config::{Coefficient, CommandKind, ExperimentConfig};
use crate::report::{Check, RunLog};

/// Residual allowed in exact identities.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Largest accepted log-log drift of the projection-tail ratio.
pub const LEMMA_TREND_TOL: f64 = 0.1;
/// States closer to the DMR fixed point than this are left out of the
/// closed-form comparison, where truncated sums converge too slowly.
const DMR_STATE_FLOOR: f64 = 0.025;
/// Transfer matrices for `θ_2` stay small; the DMR panels get this many nodes.
const THETA_PANEL_NODES: usize = 4;

/// Runs one command. `Err` means the configuration itself is unusable;
/// failures of individual tasks are recorded in the log.
pub fn execute(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    match cfg.command {
        CommandKind::Simulate => run_simulate(cfg, log),
        CommandKind::Coeffs => run_coeffs(cfg, log),
        CommandKind::Conditions => run_conditions(cfg, log),
        CommandKind::Decompose => run_decompose(cfg, log),
        CommandKind::Couple => run_couple(cfg, log),
        CommandKind::Report => run_report(cfg, log),
    }
}

fn dyadic(from: u32, to: u32) -> Vec<u64> {
    (from..=to).map(|j| 1u64 << j).collect()
}

fn run_simulate(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    let spec = cfg.process()?;
    let batch = match simulate(spec, cfg.n, cfg.replicas, cfg.root_seed) {
        Ok(b) => b,
        Err(e) => {
            log.task_error("simulate", e);
            return Ok(());
        }
    };
    log.artifact("trajectories.csv", batch.to_csv());
    log.result("metadata", &batch.metadata())?;
    let scaled: Vec<f64> = batch.values.iter().map(|v| v.iter().sum::<f64>() / (v.len() as f64).sqrt()).collect();
    let all: Vec<f64> = batch.values.iter().flatten().copied().collect();
    log.result(
        "summary",
        &json!({
            "sample_mean": mean(&all),
            "scaled_sum_mean": mean(&scaled),
            "scaled_sum_second_moment": mean(&scaled.iter().map(|s| s * s).collect::<Vec<_>>()),
        }),
    )?;
    Ok(())
}

/// Transfer matrix used by the kernel-power coefficients.
fn chain_for(spec: &ProcessSpec, small: bool) -> siplab::Result<DiscreteChain> {
    match spec {
        ProcessSpec::Dmr { a, f_exponent } if small => Ok(Dmr::new(*a, *f_exponent)?.discrete_chain(THETA_PANEL_NODES)),
        _ => spec.discrete_chain(),
    }
}

#[derive(Serialize)]
struct CurveResult<'a> {
    curve: &'a CoefficientCurve,
    /// Power law fitted on lags >= 4.
    rate_fit: Option<siplab::stats::RateFit>,
    /// `exp` of the least-squares slope of `ln value` against the lag.
    geometric_ratio: Option<f64>,
}

pub fn geometric_ratio(lags: &[u64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = lags.iter().zip(values).filter(|(_, v)| **v > 0.0).map(|(l, v)| (*l as f64, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| (sxy / sxx).exp())
}

fn record_curve(log: &mut RunLog, key: &str, curve: &CoefficientCurve) -> Result<()> {
    let min_lag = curve.lags.iter().copied().find(|l| *l >= 4).unwrap_or(1);
    let rate_fit = curve.rate_fit(min_lag).ok();
    let geometric_ratio = geometric_ratio(&curve.lags, &curve.values);
    log.artifact(&format!("{key}.csv"), curve.to_csv());
    log.result(key, &CurveResult { curve, rate_fit, geometric_ratio })
}

fn run_coeffs(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    let spec = cfg.process()?;
    let s = &cfg.coeffs;
    let lags = cfg.n_grid.clone().unwrap_or_else(|| dyadic(0, 10));
    let curves: siplab::Result<Vec<(&str, CoefficientCurve)>> = match s.coefficient {
        Coefficient::Gamma => match s.estimator {
            Estimator::ExactKernel => gamma_exact(spec, &lags).map(|c| vec![("gamma", c)]),
            Estimator::BinnedMc => gamma_binned_mc(spec, &lags, cfg.replicas, s.bins, cfg.root_seed).map(|c| vec![("gamma", c)]),
            Estimator::Coupling => bail!("field `coeffs.estimator`: coupling applies to the tau coefficient only"),
        },
        Coefficient::Alpha1 | Coefficient::Alpha2 => {
            let k = if s.coefficient == Coefficient::Alpha1 { 1 } else { 2 };
            chain_for(spec, false).and_then(|chain| {
                log.disclose(format!("alpha computed on a {}-state transfer matrix", chain.states.len()));
                let rep = alpha_coefficient(&chain, k, &lags, s.alpha_grid, s.pair_grid, k == 1)?;
                if let Some(g) = rep.grid_sensitivity {
                    log.disclose(format!("alpha threshold-grid sensitivity {}", fmt17(g)));
                }
                Ok(vec![(if k == 1 { "alpha1" } else { "alpha2" }, rep.curve)])
            })
        }
        Coefficient::Theta2 => chain_for(spec, true).and_then(|chain| {
            log.disclose(format!("theta2 and lambda2 computed on a {}-state transfer matrix", chain.states.len()));
            theta2_lambda2(&chain, &lags).map(|(t, l)| vec![("theta2", t), ("lambda2", l)])
        }),
        Coefficient::Tau => tau_coupling(spec, &lags, cfg.replicas, cfg.root_seed).map(|(a, b)| vec![("tau1", a), ("tau2", b)]),
        Coefficient::Esn => projective_norm_esn(spec, &lags, s.p).map(|c| vec![("esn", c)]),
        Coefficient::Esn2 => projective_norm_esn2(spec, &lags, s.p).map(|c| vec![("esn2", c)]),
    };
    match curves {
        Ok(curves) => {
            for (key, c) in &curves {
                record_curve(log, key, c)?;
            }
        }
        Err(e) => log.task_error("coeffs", e),
    }
    Ok(())
}

fn condition_ids(ids: &[String]) -> Result<(Vec<ConditionId>, bool)> {
    if ids.iter().any(|s| s == "all") {
        // The synthetic check needs supplied curves, never a process.
        let all = ConditionId::ALL.iter().copied().filter(|c| *c != ConditionId::Synthetic).collect();
        return Ok((all, true));
    }
    let mut out = Vec::new();
    for s in ids {
        match ConditionId::parse(s) {
            Some(id) => out.push(id),
            None => bail!("field `conditions.ids`: unknown condition `{s}`"),
        }
    }
    if out.is_empty() {
        bail!("field `conditions.ids` is empty");
    }
    Ok((out, false))
}

fn run_conditions(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    let spec = cfg.process()?;
    let (ids, all) = condition_ids(&cfg.conditions.ids)?;
    let mut params = cfg.conditions.params.clone();
    if let Some(g) = &cfg.n_grid {
        params.n_max = *g.last().unwrap_or(&params.n_max);
    }
    if let Err(e) = params.validate() {
        bail!("section `conditions`: {e}");
    }
    let source = ProcessSource { spec: spec.clone(), seed: cfg.root_seed };
    let mut outcomes = Vec::new();
    let mut skipped = BTreeMap::new();
    let mut csv = String::from("condition,part,n,partial_sum,block_sum\n");
    for id in ids {
        match evaluate_condition(id, &source, &params) {
            Ok(out) => {
                if let ConditionOutcome::Series { parts, .. } = &out {
                    for d in parts {
                        for (i, n) in d.grid.iter().enumerate() {
                            let _ = writeln!(
                                csv,
                                "{},{},{n},{},{}",
                                id.name(),
                                d.part.as_deref().unwrap_or(""),
                                fmt17(d.partial_sums[i]),
                                fmt17(d.block_sums[i])
                            );
                        }
                    }
                }
                outcomes.push(json!({ "condition": id.name(), "satisfied": out.satisfied(), "outcome": out }));
            }
            Err(e) if all => {
                skipped.insert(id.name(), e.to_string());
            }
            Err(e) => log.task_error(&id.name(), e),
        }
    }
    if !skipped.is_empty() {
        log.disclose(format!("{} conditions do not apply to this process and were skipped", skipped.len()));
    }
    log.artifact("conditions.csv", csv);
    log.result("conditions", &outcomes)?;
    log.result("skipped", &skipped)?;
    Ok(())
}

fn run_decompose(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    let spec = cfg.process()?;
    let d = &cfg.decompose;
    if d.identity_n >= cfg.n {
        bail!("field `decompose.identity_n` must be below `n`");
    }
    let oracle = match spec.kernel_oracle() {
        Ok(o) => o,
        Err(e) => {
            log.task_error("decompose", e);
            return Ok(());
        }
    };
    let batch = match simulate(spec, cfg.n, cfg.replicas, cfg.root_seed) {
        Ok(b) => b,
        Err(e) => {
            log.task_error("simulate", e);
            return Ok(());
        }
    };
    let dmr = match spec {
        ProcessSpec::Dmr { a, f_exponent } => Some(Dmr::new(*a, *f_exponent)?),
        _ => None,
    };

    let mut worst_bound: Option<f64> = Some(0.0);
    let mut closed_form_dev: f64 = 0.0;
    let mut first = None;
    for (states, values) in batch.states.iter().zip(&batch.values) {
        let path = Path { states: states.clone(), values: values.clone() };
        let dec = match build_decomposition(&path, oracle.as_ref(), d.truncation, f64::INFINITY) {
            Ok(dec) => dec,
            Err(e) => {
                log.task_error("martingale_decomposition", e);
                return Ok(());
            }
        };
        worst_bound = worst_bound.zip(dec.truncation_error_bound).map(|(a, b)| a.max(b));
        if let Some(dmr) = &dmr {
            for (k, w) in states.windows(2).enumerate() {
                if w[0].abs() >= DMR_STATE_FLOOR && w[1].abs() >= DMR_STATE_FLOOR {
                    closed_form_dev = closed_form_dev.max((dec.d_values[k] - dmr.martingale_increment(w[0], w[1])?).abs());
                }
            }
        }
        first.get_or_insert(dec);
    }
    let dec = first.expect("at least one replica");
    let mut csv = String::from("k,d,s,m,r\n");
    for k in 0..dec.d_values.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            k + 1,
            fmt17(dec.d_values[k]),
            fmt17(dec.s_partial[k]),
            fmt17(dec.m_partial[k]),
            fmt17(dec.r_partial[k])
        );
    }
    log.artifact("decomposition.csv", csv);
    log.result("truncation", &json!({ "n": d.truncation, "error_bound": worst_bound }))?;
    match worst_bound {
        Some(b) => log.disclose(format!("increments truncated at {} terms; tail bound {}", d.truncation, fmt17(b))),
        None => log.disclose(format!("increments truncated at {} terms; no tail bound available", d.truncation)),
    }
    if dmr.is_some() {
        log.checks.push(Check::at_most(
            "martingale_increment_closed_form",
            closed_form_dev,
            IDENTITY_TOL,
            format!("max |d_k - closed form| over states with |y| >= {DMR_STATE_FLOOR}"),
        ));
    }

    let mut residuals = Vec::new();
    for states in &batch.states {
        match four_term_residual(oracle.as_ref(), states, d.identity_n, d.identity_big_n) {
            Ok(r) => residuals.push(r.abs()),
            Err(e) => {
                log.task_error("four_term_identity", e);
                break;
            }
        }
    }
    if residuals.len() == batch.states.len() {
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        log.result("four_term_identity", &json!({ "n": d.identity_n, "big_n": d.identity_big_n, "max_residual": worst }))?;
        log.checks.push(Check::at_most("four_term_identity", worst, IDENTITY_TOL, "max |residual| over replicas"));
    }

    match spec.discrete_chain().and_then(|c| verify_projection_tail(&c, &d.lemma_grid, d.lemma_p, d.lemma_q)) {
        Ok(rep) => {
            let mut csv = String::from("n,left,right,ratio\n");
            for i in 0..rep.n_grid.len() {
                let _ = writeln!(csv, "{},{},{},{}", rep.n_grid[i], fmt17(rep.left[i]), fmt17(rep.right[i]), fmt17(rep.ratios[i]));
            }
            log.artifact("projection_tail.csv", csv);
            if let Some(t) = rep.trend_slope {
                log.checks.push(Check::at_most("projection_tail_trend", t.abs(), LEMMA_TREND_TOL, "|log-log slope of left/right|"));
            }
            log.result("projection_tail", &rep)?;
        }
        Err(e) => log.task_error("projection_tail", e),
    }
    Ok(())
}

fn run_couple(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    let spec = cfg.process()?;
    let method = cfg.couple.method;
    let horizons = cfg.n_grid.clone().unwrap_or_else(|| dyadic(6, 12));
    let res = match couple(spec, method, &horizons, cfg.replicas, cfg.root_seed) {
        Ok(r) => r,
        Err(e) => {
            log.task_error("couple", e);
            return Ok(());
        }
    };
    if method == CouplingMethod::QuantilePerStep {
        log.disclose("per-step quantile coupling is a baseline and does not attain the optimal rate");
    }
    if let Some(emb) = &res.embedding {
        let tol = 3.0 * emb.stopping_time_stderr + 0.01 * res.sigma2_used;
        log.checks.push(Check::at_most(
            "mean_stopping_time",
            (emb.mean_stopping_time - res.sigma2_used).abs(),
            tol,
            "|mean tau - sigma^2|, threshold 3 standard errors plus 1%",
        ));
        log.checks.push(Check::at_most(
            "truncated_mass",
            emb.truncated_mass,
            siplab::coupling::source::TRUNCATION_MASS * (1.0 + 1e-9),
            "largest per-step mass removed from the increment law",
        ));
    }
    log.artifact("coupling.csv", res.to_csv());
    log.result("coupling", &res)?;
    Ok(())
}

/// Child reports, one directory level below `dir`, in name order.
fn child_reports(dir: &FsPath) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    for entry in entries {
        let entry = entry?;
        let path = entry.path().join("report.json");
        if path.is_file() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

fn run_report(cfg: &ExperimentConfig, log: &mut RunLog) -> Result<()> {
    let dir = cfg.report.input_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let children = child_reports(&dir)?;
    let mut csv = String::from("run,command,status,check,passed,value,threshold\n");
    let mut runs = Vec::new();
    for (name, path) in children {
        let parsed: Result<Value> = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))
            .and_then(|t| serde_json::from_str(&t).with_context(|| format!("{} is not JSON", path.display())));
        let v = match parsed {
            Ok(v) => v,
            Err(e) => {
                log.task_error(&name, format!("{e:#}"));
                continue;
            }
        };
        let command = v["command"].as_str().unwrap_or("").to_owned();
        let status = v["status"].as_str().unwrap_or("").to_owned();
        let checks = v["checks"].as_array().cloned().unwrap_or_default();
        let num = |x: &Value| x.as_f64().map(fmt17).unwrap_or_default();
        for c in &checks {
            let _ = writeln!(
                csv,
                "{name},{command},{status},{},{},{},{}",
                c["name"].as_str().unwrap_or(""),
                c["passed"].as_bool().unwrap_or(false),
                num(&c["value"]),
                num(&c["threshold"])
            );
            log.checks.push(Check {
                name: format!("{name}/{}", c["name"].as_str().unwrap_or("")),
                passed: c["passed"].as_bool().unwrap_or(false),
                value: c["value"].as_f64(),
                threshold: c["threshold"].as_f64(),
                detail: c["detail"].as_str().unwrap_or("").to_owned(),
            });
        }
        if checks.is_empty() {
            let _ = writeln!(csv, "{name},{command},{status},,,,");
        }
        let errors = v["errors"].as_array().map_or(0, Vec::len);
        if status == "partial_failure" {
            log.task_error(&name, format!("run reported {errors} task errors"));
        }
        runs.push(json!({
            "run": name,
            "command": command,
            "status": status,
            "checks_passed": checks.iter().filter(|c| c["passed"].as_bool() == Some(true)).count(),
            "checks_total": checks.len(),
            "errors": errors,
        }));
    }
    if runs.is_empty() {
        log.disclose(format!("no run reports found under {}", dir.display()));
    }
    log.artifact("summary.csv", csv);
    log.result("runs", &runs)?;
    Ok(())
}
