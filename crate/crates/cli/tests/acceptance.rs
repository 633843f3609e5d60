//! Acceptance criteria, run in sequence so that the runtime budgets are
//! measured without competing tests. Prints one PASS/FAIL line per criterion;
//! numeric arguments select a subset (`cargo test --test acceptance -- 3 10`).

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use siplab::coupling::{couple, embed::BASE_DIVISIONS, skorokhod_embed_iid, BrownianGrid, CouplingMethod, IidSource};
use siplab::dependence::{alpha_coefficient, tau_coupling};
use siplab::processes::circle::{exponent_identity_sides, projective_exponent, smoothness_exponent, Circle, FourierSpec};
use siplab::processes::dmr::{Dmr, DEFAULT_PANEL_NODES};
use siplab::processes::{Innovation, PmObservable, ProcessSpec};
use siplab::projective::conditions::{condfap, evaluate_condition, lilcond, lilcond_gamma_threshold, ConditionOutcome, ConditionParams, SuppliedCurves};
use siplab::projective::{projection_p0, verify_projection_tail, verify_four_term_identity, ConditionId, Verdict};
use siplab::quantile::{build_HG, condition_integral, IntegralMode, QuantileFunction};
use siplab::numtheory::FrequencyId;
use siplab::rng::map_replicas;
use siplab::stats::{ks_distance, loglog_rate_fit, mean, std_error, EmpiricalDist, StandardNormal};
use siplab::SeedStream;
use siplab_cli::config::{Coefficient, CommandKind, ExperimentConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `sign(x)|x|^{1/2}`
fn f_half(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Stationary DMR draw with `|x| >= floor`.
fn dmr_state_away_from_zero(d: &Dmr, floor: f64, rng: &mut impl Rng) -> f64 {
    loop {
        let x = d.sample_stationary(rng);
        if x.abs() >= floor {
            return x;
        }
    }
}

fn dmr_martingale_closed_form() -> Outcome {
    let d = Dmr::new(1.0, 0.5).map_err(|e| e.to_string())?;
    let mut rng = SeedStream::new(101, 0).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let y0 = dmr_state_away_from_zero(&d, 0.025, &mut rng);
        let y1 = dmr_state_away_from_zero(&d, 0.025, &mut rng);
        // d_1 = f(ζ_1)/|ζ_1| - f(ζ_0)/|ζ_0| + f(ζ_0)
        let closed = f_half(y1) / y1.abs() - f_half(y0) / y0.abs() + f_half(y0);
        let mut truncated = 0.0;
        for i in 1..=1000u64 {
            truncated += projection_p0(&d, i - 1, y0, y1).map_err(|e| e.to_string())?;
        }
        worst = worst.max((truncated - closed).abs());
    }
    check(worst < 1e-8, format!("max |truncated - closed form| = {worst:.3e} over 1000 pairs (tol 1e-8)"))
}

fn dmr_conditional_moment_rate() -> Outcome {
    let ns: Vec<u64> = (3..=14).map(|j| 1u64 << j).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for (a, p) in [(1.0, 3.0), (2.0, 4.0)] {
        let d = Dmr::new(a, 0.5).map_err(|e| e.to_string())?;
        let vals = ns.iter().map(|n| d.conditional_mean_power(*n, p)).collect::<siplab::Result<Vec<f64>>>().map_err(|e| e.to_string())?;
        let xs: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
        let fit = loglog_rate_fit(&xs, &vals).map_err(|e| e.to_string())?;
        let target = -(a + p / 2.0);
        ok &= (fit.slope - target).abs() <= 0.1;
        parts.push(format!("(a={a}, p={p}) slope {:.4} vs {target}", fit.slope));
    }
    check(ok, parts.join("; ") + " (tol 0.1)")
}

fn golden_circle() -> Result<Circle, String> {
    Circle::new(FrequencyId::Golden, &FourierSpec::default()).map_err(|e| e.to_string())
}

/// `Σ_{k≠0} |f̂(k)|² (1 + cos 2πka) / (1 - cos 2πka)` evaluated directly.
fn diagonal_sigma2(c: &Circle) -> f64 {
    let a = (5f64.sqrt() - 1.0) / 2.0;
    c.modes
        .iter()
        .map(|m| {
            let cs = (2.0 * std::f64::consts::PI * m.k as f64 * a).cos();
            2.0 * m.coef.norm_sqr() * (1.0 + cs) / (1.0 - cs)
        })
        .sum()
}

fn circle_scaled_sums(c: &Circle, n: usize, replicas: usize, seed: u64) -> Result<Vec<f64>, String> {
    map_replicas(seed, replicas, |_, s| c.sample_path(n, &mut s.rng()).map(|p| p.values.iter().sum::<f64>() / (n as f64).sqrt()))
        .into_iter()
        .collect::<siplab::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())
}

fn circle_sigma2() -> Outcome {
    let c = golden_circle()?;
    let s = match FourierSpec::default() {
        FourierSpec::Default { p, .. } => smoothness_exponent(p),
        _ => unreachable!(),
    };
    let oracle = diagonal_sigma2(&c);
    let lib = c.sigma2().map_err(|e| e.to_string())?.value;
    let sq: Vec<f64> = circle_scaled_sums(&c, 100_000, 200, 303)?.iter().map(|x| x * x).collect();
    let (est, se) = (mean(&sq), std_error(&sq));
    check(
        (est - oracle).abs() < 3.0 * se && ((lib - oracle) / oracle).abs() < 1e-10,
        format!("Var(S_n)/n = {est:.5} ± {se:.5}, diagonalization {oracle:.5}, library {lib:.5}, s = {s:.4}"),
    )
}

fn circle_clt() -> Outcome {
    let c = golden_circle()?;
    let sigma = diagonal_sigma2(&c).sqrt();
    let z: Vec<f64> = circle_scaled_sums(&c, 100_000, 1000, 404)?.iter().map(|x| x / sigma).collect();
    let ks = ks_distance(&EmpiricalDist::new(z).map_err(|e| e.to_string())?, &StandardNormal);
    check(ks < 0.052, format!("KS = {ks:.4} over 1000 replicas, n = 1e5 (critical 0.052)"))
}

fn pm_mixing_rate() -> Outcome {
    let spec = ProcessSpec::Pm { gamma: 0.5, observable: PmObservable::default(), ulam_cells: 2048, burn_in: 0 };
    let chain = spec.discrete_chain().map_err(|e| e.to_string())?;
    let lags: Vec<u64> = (0..=12).map(|j| 1u64 << j).collect();
    let rep = alpha_coefficient(&chain, 2, &lags, 64, 8, false).map_err(|e| e.to_string())?;
    let fit = rep.curve.rate_fit(16).map_err(|e| e.to_string())?;
    let target = (0.5 - 1.0) / 0.5;
    check((fit.slope - target).abs() <= 0.2, format!("alpha_2 slope {:.4} on lags 16..4096 vs {target} (tol 0.2)", fit.slope))
}

fn arl(c: f64, delta: f64) -> ProcessSpec {
    ProcessSpec::Arl { c, delta, s: 4.0, innovation: Innovation::StudentT { nu: 5.0 }, holder: 1.0, clip: None, burn_in: 1000 }
}

fn arl_coupling_rate() -> Outcome {
    let lags: Vec<u64> = (1..=12).collect();
    let (t1, _) = tau_coupling(&arl(0.5, 0.0), &lags, 2000, 606).map_err(|e| e.to_string())?;
    // Least-squares slope of ln τ_1 against n.
    let xs: Vec<f64> = lags.iter().map(|n| *n as f64).collect();
    let ys: Vec<f64> = t1.values.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let ratio = slope.exp();

    let lags: Vec<u64> = (1..=6).map(|j| 1u64 << j).collect();
    let (t1, _) = tau_coupling(&arl(0.5, 0.5), &lags, 4000, 607).map_err(|e| e.to_string())?;
    let fit = t1.rate_fit(1).map_err(|e| e.to_string())?;
    let bound = (0.5 + 1.0 - 4.0) / 0.5 + 0.4;
    check(
        (ratio - 0.5).abs() <= 0.02 && fit.slope <= bound,
        format!("delta=0: ratio {ratio:.4} (0.5 ± 0.02); delta=0.5, S=4, C=0.5: slope {:.3} <= {bound}", fit.slope),
    )
}

fn quantile_round_trip() -> Outcome {
    let mut rng = SeedStream::new(707, 0).rng();
    let law = Innovation::StudentT { nu: 5.0 };
    let sample: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
    let mut mags: Vec<f64> = sample.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let n = mags.len();
    // H by direct summation of the step function.
    let h_emp = |x: f64| -> f64 {
        let k = ((n as f64 * x).floor() as usize).min(n);
        let head: f64 = mags[..k].iter().sum::<f64>() / n as f64;
        head + if k < n { (x - k as f64 / n as f64) * mags[k] } else { 0.0 }
    };
    let h_pareto = |x: f64| x.powf(0.75) / 0.75;

    let pareto = QuantileFunction::pareto(4.0, 1.0).map_err(|e| e.to_string())?;
    let empirical = QuantileFunction::Empirical { magnitudes: mags.clone() };
    let mut round_trip: f64 = 0.0;
    let mut identity: f64 = 0.0;
    let mut pareto_closed: f64 = 0.0;
    for (q, oracle) in [(&pareto, &h_pareto as &dyn Fn(f64) -> f64), (&empirical, &h_emp as &dyn Fn(f64) -> f64)] {
        let hg = build_HG(q, 1e-13).map_err(|e| e.to_string())?;
        for i in 0..1000 {
            let u = hg.total_mass() * (i as f64 + 0.5) / 1000.0;
            let x = hg.g(u);
            round_trip = round_trip.max((oracle(x) - u).abs()).max((hg.h(x) - u).abs());
        }
        for i in 0..50 {
            let a = hg.total_mass() * (i as f64 + 0.5) / 50.0;
            let lhs = condition_integral(q, &hg, hg.g(a), 3.0, IntegralMode::QpOfU).map_err(|e| e.to_string())?.value;
            let rhs = condition_integral(q, &hg, a, 3.0, IntegralMode::Qpm1CircG).map_err(|e| e.to_string())?.value;
            identity = identity.max(((lhs - rhs) / rhs).abs());
            if std::ptr::eq(q, &pareto) {
                // ∫_0^λ u^{-3/4} du = 4 λ^{1/4}
                pareto_closed = pareto_closed.max(((lhs - 4.0 * hg.g(a).powf(0.25)) / lhs).abs());
            }
        }
    }
    check(
        round_trip < 1e-10 && identity < 1e-8 && pareto_closed < 1e-8,
        format!("max |H(G(u)) - u| = {round_trip:.2e}; integral forms differ by {identity:.2e} (relative), Pareto closed form {pareto_closed:.2e}"),
    )
}

fn four_term_identity() -> Outcome {
    let d = Dmr::new(1.0, 0.5).map_err(|e| e.to_string())?;
    let worst = verify_four_term_identity(&d, 10, 20, 1000, 808).map_err(|e| e.to_string())?;
    check(worst < 1e-8, format!("max residual {worst:.3e} over 1000 paths, n = 10, N = 20 (tol 1e-8)"))
}

fn evaluator_calibration() -> Outcome {
    let mut rng = SeedStream::new(909, 0).rng();
    let mut wrong = Vec::new();
    for _ in 0..50 {
        let e: f64 = rng.random_range(-1.3..-0.7);
        let mut params = ConditionParams::new(3.0);
        params.exponent = Some(e);
        params.n_max = 1u64 << rng.random_range(12..=18);
        let out = evaluate_condition(ConditionId::Synthetic, &SuppliedCurves::default(), &params).map_err(|e| e.to_string())?;
        let verdict = match out {
            ConditionOutcome::Series { verdict, .. } => verdict,
            _ => return Err("synthetic condition is not a series".into()),
        };
        let expected = if e < -1.05 {
            Some(Verdict::Converges)
        } else if e > -0.95 {
            Some(Verdict::Diverges)
        } else {
            None
        };
        if expected.is_some_and(|x| x != verdict) {
            wrong.push(format!("{e:.3}: {verdict:?}"));
        }
    }
    let fap = condfap(5.0, 0.5, 1.0, 3.0);
    let fap_ok = fap.left == 1.5 && (fap.right - 0.5 * (3.0 - 2.0 / 3.0)).abs() < 1e-15 && fap.holds;
    let (l, r) = exponent_identity_sides(2.0);
    let exp_ok = smoothness_exponent(2.0) == 1.0 && projective_exponent(2.0) == 0.5 && l == 0.5 && r == 0.5;
    let threshold = lilcond_gamma_threshold(4.0, None);
    let lil_ok = (threshold - 2.0 / 9.0).abs() < 1e-15 && lilcond(4.0, 2.0 / 9.0, None).holds && !lilcond(4.0, 2.0 / 9.0 + 1e-9, None).holds;
    check(
        wrong.is_empty() && fap_ok && exp_ok && lil_ok,
        format!(
            "synthetic verdicts wrong in {}/50 {wrong:?}; condfap left {} right {:.6} holds {}; s(2) = {}, gamma(2) = {}, sides {l} = {r}; lilcond threshold {threshold:.6}",
            wrong.len(),
            fap.left,
            fap.right,
            fap.holds,
            smoothness_exponent(2.0),
            projective_exponent(2.0)
        ),
    )
}

fn skorokhod_rate() -> Outcome {
    let src = IidSource::new(Innovation::Rademacher).map_err(|e| e.to_string())?;
    let mut bm = BrownianGrid::new(1.0 / f64::from(BASE_DIVISIONS), SeedStream::new(1010, 1).rng()).map_err(|e| e.to_string())?;
    let mut rng = SeedStream::new(1010, 0).rng();
    let e = skorokhod_embed_iid(&src, 10_000, 1.0, &mut bm, &mut rng).map_err(|e| e.to_string())?;
    let two_point = e.d.iter().all(|d| *d == 1.0 || *d == -1.0);
    let tau = mean(&e.stopping_times);

    let horizons: Vec<u64> = (10..=17).map(|j| 1u64 << j).collect();
    let res = couple(&ProcessSpec::Iid { law: Innovation::Rademacher }, CouplingMethod::SkorokhodExit, &horizons, 32, 1011).map_err(|e| e.to_string())?;
    let emb = res.embedding.ok_or("no embedding diagnostics")?;
    let fit = emb.martingale_rate_fit.ok_or("no rate fit")?;
    check(
        two_point && (tau - 1.0).abs() <= 0.02 && (0.15..=0.35).contains(&fit.slope),
        format!(
            "E(tau) = {tau:.4} over 1e4 steps (all steps {:.4}); two-point law {two_point}; slope {:.3} ± {:.3} over 2^10..2^17, 32 replicas",
            emb.mean_stopping_time, fit.slope, fit.slope_stderr
        ),
    )
}

fn projection_tail_bound() -> Outcome {
    let chain = Dmr::new(1.0, 0.5).map_err(|e| e.to_string())?.discrete_chain(DEFAULT_PANEL_NODES);
    let grid: Vec<u64> = (1..=8).map(|j| 1u64 << j).collect();
    let rep = verify_projection_tail(&chain, &grid, 3.0, 1.0).map_err(|e| e.to_string())?;
    let slope = rep.trend_slope.ok_or("no trend fit")?;
    check(
        slope.abs() <= 0.1 && rep.max_ratio.is_finite(),
        format!("ratio trend slope {slope:.4} (tol 0.1), max ratio {:.4} over n = 2..256", rep.max_ratio),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = |command, name: &str, process| {
        let mut c = ExperimentConfig::new(command);
        c.output_dir = tmp.path().join(name);
        c.process = Some(process);
        c.root_seed = 12;
        c
    };
    let dmr = ProcessSpec::Dmr { a: 1.0, f_exponent: 0.5 };
    let rademacher = ProcessSpec::Iid { law: Innovation::Rademacher };
    let mut cfgs = Vec::new();
    let mut c = base(CommandKind::Simulate, "simulate", dmr.clone());
    c.n = 4096;
    c.replicas = 64;
    cfgs.push(c);
    let mut c = base(CommandKind::Coeffs, "tau", arl(0.5, 0.5));
    c.coeffs.coefficient = Coefficient::Tau;
    c.n_grid = Some(vec![2, 4, 8, 16]);
    c.replicas = 500;
    cfgs.push(c);
    let mut c = base(CommandKind::Coeffs, "gamma-mc", dmr.clone());
    c.coeffs.estimator = siplab::dependence::Estimator::BinnedMc;
    c.n_grid = Some(vec![1, 2, 4]);
    c.replicas = 400;
    c.coeffs.bins = 10;
    cfgs.push(c);
    let mut c = base(CommandKind::Conditions, "conditions", dmr.clone());
    c.conditions.params.n_max = 1 << 10;
    cfgs.push(c);
    let mut c = base(CommandKind::Decompose, "decompose", dmr.clone());
    c.n = 512;
    c.replicas = 8;
    cfgs.push(c);
    let mut c = base(CommandKind::Couple, "couple", rademacher);
    c.couple.method = CouplingMethod::SkorokhodExit;
    c.n_grid = Some(vec![64, 128, 256, 512]);
    c.replicas = 8;
    cfgs.push(c);

    let mut mismatched = Vec::new();
    for cfg in &cfgs {
        let mut runs = Vec::new();
        for threads in [1, 8, 1, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            pool.install(|| siplab_cli::run(cfg)).map_err(|e| e.to_string())?;
            runs.push(files(&cfg.output_dir));
        }
        if runs.iter().any(|r| *r != runs[0]) {
            mismatched.push(cfg.command.name());
        }
    }
    check(
        mismatched.is_empty(),
        format!("{} commands run twice at 1 and at 8 workers; differing outputs: {mismatched:?}", cfgs.len()),
    )
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "dmr closed-form martingale increment", budget: secs(1), run: dmr_martingale_closed_form },
        Criterion { id: 2, name: "dmr conditional-moment rate", budget: secs(10), run: dmr_conditional_moment_rate },
        Criterion { id: 3, name: "circle sigma^2", budget: secs(60), run: circle_sigma2 },
        Criterion { id: 4, name: "circle CLT", budget: secs(60), run: circle_clt },
        Criterion { id: 5, name: "intermittent-map mixing rate", budget: secs(120), run: pm_mixing_rate },
        Criterion { id: 6, name: "arl coupling rate", budget: secs(120), run: arl_coupling_rate },
        Criterion { id: 7, name: "quantile round trip", budget: secs(1), run: quantile_round_trip },
        Criterion { id: 8, name: "four-term decomposition identity", budget: secs(5), run: four_term_identity },
        Criterion { id: 9, name: "condition-evaluator calibration", budget: secs(5), run: evaluator_calibration },
        Criterion { id: 10, name: "skorokhod embedding validity and rate", budget: secs(300), run: skorokhod_rate },
        Criterion { id: 11, name: "projection-tail bound", budget: secs(10), run: projection_tail_bound },
        Criterion { id: 12, name: "reproducibility across workers", budget: Duration::MAX, run: reproducibility },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let in_budget = took <= c.budget;
        let budget = if c.budget == Duration::MAX { String::new() } else { format!(", budget {} s", c.budget.as_secs()) };
        let (pass, detail) = match outcome {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "acceptance {:>2} {}: {} | {detail} | {:.2} s{budget}{}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if in_budget { "" } else { " (over budget)" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
