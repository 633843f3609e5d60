use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use siplab_cli::config::ExperimentConfig;
use siplab_cli::grid::parse_grid;
use siplab_cli::overrides::{self, parse_value};
use siplab_cli::{exit_code, run, RunError, EXIT_USAGE};
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "siplab", version, about = "Invariance-principle experiments on stationary processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate stationary trajectories.
    Simulate(Box<Flags>),
    /// Dependence coefficients and projective norms against the lag.
    Coeffs(Box<Flags>),
    /// Evaluate projective and mixing conditions.
    Conditions(Box<Flags>),
    /// Martingale decomposition and its identities.
    Decompose(Box<Flags>),
    /// Couple partial sums with a Brownian motion.
    Couple(Box<Flags>),
    /// Summarize the reports of earlier runs.
    Report(Box<Flags>),
    /// Re-run a persisted configuration as is.
    Run {
        config: PathBuf,
        /// Write outputs here instead of the persisted output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct Flags {
    /// Config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Path length.
    #[arg(long)]
    n: Option<usize>,
    /// Lags or horizons: `2^10..2^17`, `1:16` or `8,16,32`.
    #[arg(long, alias = "lags", alias = "horizons")]
    n_grid: Option<String>,

    /// dmr, circle, arl, pm, linear, iid, or the i.i.d. shorthands rademacher and gaussian.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    f_exponent: Option<f64>,
    /// Intermittency of pm; otherwise the condition exponent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Condition exponent gamma when `--gamma` is taken by the process.
    #[arg(long)]
    cond_gamma: Option<f64>,
    /// golden, sqrt2, cubic, p/q or a decimal.
    #[arg(long)]
    frequency: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Moment order S.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    holder: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// gaussian[:sd], student-t:nu, sym-pareto:r, uniform[:w] or rademacher.
    #[arg(long)]
    innovation: Option<String>,
    #[arg(long)]
    burn_in: Option<u64>,

    /// gamma, alpha1, alpha2, theta2, tau, esn, esn2.
    #[arg(long)]
    coefficient: Option<String>,
    /// exact-kernel, binned-mc or coupling.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    /// Moment order p.
    #[arg(long)]
    p: Option<f64>,

    /// Condition to evaluate; repeat, or `all`.
    #[arg(long = "id")]
    ids: Vec<String>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    u_exponent: Option<f64>,
    #[arg(long)]
    psi_exponent: Option<f64>,
    #[arg(long)]
    psi_log_exponent: Option<f64>,
    #[arg(long)]
    exponent: Option<f64>,

    /// quantile, skorokhod, quantile-per-step or skorokhod-exit.
    #[arg(long)]
    method: Option<String>,

    #[arg(long)]
    identity_n: Option<usize>,
    #[arg(long)]
    identity_big_n: Option<u64>,
    #[arg(long)]
    truncation: Option<u64>,
    #[arg(long)]
    lemma_grid: Option<String>,
    #[arg(long)]
    q: Option<f64>,

    /// Directory holding the run directories to summarize.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Any config key, as `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn grid_value(s: &str) -> Result<Value> {
    Ok(Value::Array(parse_grid(s)?.into_iter().map(|n| Value::Integer(n as i64)).collect()))
}

fn method_name(s: &str) -> &str {
    match s {
        "quantile" => "quantile-per-step",
        "skorokhod" | "skorohod" => "skorokhod-exit",
        other => other,
    }
}

fn build_config(command: &str, f: &Flags) -> Result<ExperimentConfig> {
    let file: Option<Table> = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            Some(text.parse().with_context(|| format!("{} is not valid TOML", path.display()))?)
        }
        None => None,
    };
    let fam = overrides::effective_family(file.as_ref(), f.family.as_deref());
    let is = |name: &str| fam.as_deref() == Some(name);
    let mut sets: Vec<(String, Value)> = Vec::new();
    let mut put = |k: &str, v: Value| sets.push((k.to_owned(), v));
    let float = |x: f64| Value::Float(x);
    let int = |x: u64| Value::Integer(x as i64);

    if let Some(v) = f.seed {
        put("root_seed", int(v));
    }
    if let Some(v) = f.reps {
        put("replicas", int(v as u64));
    }
    if let Some(v) = f.n {
        put("n", int(v as u64));
    }
    if let Some(v) = &f.n_grid {
        put("n_grid", grid_value(v)?);
    }
    if let Some(v) = &f.out {
        put("output_dir", Value::String(v.display().to_string()));
    }

    for (key, v) in [("a", f.a), ("f_exponent", f.f_exponent), ("c", f.c), ("s", f.s), ("alpha", f.alpha)] {
        if let Some(v) = v {
            put(&format!("process.{key}"), float(v));
        }
    }
    if let Some(v) = f.burn_in {
        put("process.burn_in", int(v));
    }
    if let Some(v) = &f.frequency {
        put("process.frequency", overrides::frequency(v)?);
    }
    if let Some(v) = &f.innovation {
        let key = if is("iid") { "process.law" } else { "process.innovation" };
        put(key, overrides::innovation(v)?);
    }
    let conditions = command == "conditions";
    if let Some(v) = f.gamma {
        put(if is("pm") { "process.gamma" } else { "conditions.gamma" }, float(v));
    }
    if let Some(v) = f.cond_gamma {
        put("conditions.gamma", float(v));
    }
    // The autoregressive parameters double as the condition parameters.
    for (key, v) in [("delta", f.delta), ("holder", f.holder)] {
        if let Some(v) = v {
            if is("arl") {
                put(&format!("process.{key}"), float(v));
            }
            if conditions || !is("arl") {
                put(&format!("conditions.{key}"), float(v));
            }
        }
    }
    if let (Some(v), true) = (f.s, conditions) {
        put("conditions.s_moment", float(v));
    }

    if let Some(v) = &f.coefficient {
        put("coeffs.coefficient", Value::String(v.replace('-', "_")));
    }
    if let Some(v) = &f.estimator {
        put("coeffs.estimator", Value::String(v.clone()));
    }
    if let Some(v) = f.bins {
        put("coeffs.bins", int(v as u64));
    }
    if let Some(v) = f.p {
        match command {
            "coeffs" => put("coeffs.p", float(v)),
            "decompose" => put("decompose.lemma_p", float(v)),
            _ => put("conditions.p", float(v)),
        }
    }

    if !f.ids.is_empty() {
        let ids = f.ids.iter().flat_map(|s| s.split(',')).map(|s| Value::String(s.trim().replace('-', "_"))).collect();
        put("conditions.ids", Value::Array(ids));
    }
    for (key, v) in [
        ("t", f.t),
        ("r", f.r),
        ("u_exponent", f.u_exponent),
        ("psi_exponent", f.psi_exponent),
        ("psi_log_exponent", f.psi_log_exponent),
        ("exponent", f.exponent),
    ] {
        if let Some(v) = v {
            put(&format!("conditions.{key}"), float(v));
        }
    }
    if let Some(v) = f.n_max {
        put("conditions.n_max", int(v));
    }

    if let Some(v) = &f.method {
        put("couple.method", Value::String(method_name(v).into()));
    }

    if let Some(v) = f.identity_n {
        put("decompose.identity_n", int(v as u64));
    }
    if let Some(v) = f.identity_big_n {
        put("decompose.identity_big_n", int(v));
    }
    if let Some(v) = f.truncation {
        put("decompose.truncation", int(v));
    }
    if let Some(v) = &f.lemma_grid {
        put("decompose.lemma_grid", grid_value(v)?);
    }
    if let Some(v) = f.q {
        put("decompose.lemma_q", float(v));
    }
    if let Some(v) = &f.input {
        put("report.input_dir", Value::String(v.display().to_string()));
    }

    for s in &f.sets {
        let (k, v) = s.split_once('=').with_context(|| format!("`--set {s}` needs KEY=VALUE"))?;
        put(k.trim(), parse_value(v));
    }
    overrides::build(file, command, f.family.as_deref(), &sets)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SIPLAB_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("SIPLAB_THREADS=`{v}` is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("siplab: usage error: {e:#}");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    let (name, flags) = match &cli.command {
        Cmd::Simulate(f) => ("simulate", f),
        Cmd::Coeffs(f) => ("coeffs", f),
        Cmd::Conditions(f) => ("conditions", f),
        Cmd::Decompose(f) => ("decompose", f),
        Cmd::Couple(f) => ("couple", f),
        Cmd::Report(f) => ("report", f),
        Cmd::Run { config, out } => {
            let cfg = ExperimentConfig::load(config).map(|mut c| {
                if let Some(o) = out {
                    c.output_dir = o.clone();
                }
                c
            });
            return finish(cfg);
        }
    };
    finish(build_config(name, flags))
}

fn finish(cfg: Result<ExperimentConfig>) -> ExitCode {
    let result = cfg.map_err(RunError::Usage).and_then(|c| run(&c).map(|r| (r, c)));
    match result {
        Ok((report, cfg)) => {
            let passed = report.checks.iter().filter(|c| c.passed).count();
            let status = serde_json::to_value(report.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            println!(
                "{status}: {passed}/{} checks passed, {} task errors; report at {}",
                report.checks.len(),
                report.errors.len(),
                cfg.output_dir.join("report.json").display()
            );
            for e in &report.errors {
                eprintln!("siplab: {}: {}", e.task, e.message);
            }
            ExitCode::from(exit_code(report.status) as u8)
        }
        Err(e) => {
            eprintln!("siplab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
