use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use siplab::coupling::CouplingMethod;
use siplab::dependence::Estimator;
use siplab::processes::ProcessSpec;
use siplab::projective::conditions::ConditionParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Coeffs,
    Conditions,
    Decompose,
    Couple,
    Report,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Coeffs => "coeffs",
            CommandKind::Conditions => "conditions",
            CommandKind::Decompose => "decompose",
            CommandKind::Couple => "couple",
            CommandKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Gamma,
    Alpha1,
    Alpha2,
    /// `θ_2` and `λ_2` together.
    Theta2,
    /// `τ_1` and `τ_2` together.
    Tau,
    /// `‖E(S_n | F_0)‖_p`
    Esn,
    /// `‖E(S_n² | F_0) - E(S_n²)‖_{p/2}`
    Esn2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffsSection {
    #[serde(default = "default_coefficient")]
    pub coefficient: Coefficient,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    /// Bins of the binned Monte Carlo estimator.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Quantile thresholds per coordinate for `α`.
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: usize,
    #[serde(default = "default_pair_grid")]
    pub pair_grid: usize,
    /// Moment order of the projective norms.
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_coefficient() -> Coefficient {
    Coefficient::Gamma
}
fn default_estimator() -> Estimator {
    Estimator::ExactKernel
}
fn default_bins() -> usize {
    40
}
fn default_alpha_grid() -> usize {
    64
}
fn default_pair_grid() -> usize {
    8
}
fn default_p() -> f64 {
    3.0
}

impl Default for CoeffsSection {
    fn default() -> Self {
        CoeffsSection {
            coefficient: default_coefficient(),
            estimator: default_estimator(),
            bins: default_bins(),
            alpha_grid: default_alpha_grid(),
            pair_grid: default_pair_grid(),
            p: default_p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsSection {
    /// Condition names, or `all`.
    #[serde(default = "all_ids")]
    pub ids: Vec<String>,
    #[serde(flatten)]
    pub params: ConditionParams,
}

fn all_ids() -> Vec<String> {
    vec!["all".into()]
}

impl Default for ConditionsSection {
    fn default() -> Self {
        ConditionsSection { ids: all_ids(), params: ConditionParams::new(3.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    #[serde(default = "default_method")]
    pub method: CouplingMethod,
}

fn default_method() -> CouplingMethod {
    CouplingMethod::QuantilePerStep
}

impl Default for CoupleSection {
    fn default() -> Self {
        CoupleSection { method: default_method() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSection {
    /// Horizon `n` of the four-term identity.
    #[serde(default = "default_identity_n")]
    pub identity_n: usize,
    /// Split point `N` of the four-term identity.
    #[serde(default = "default_identity_big_n")]
    pub identity_big_n: u64,
    /// Truncation of the martingale increments.
    #[serde(default = "default_truncation")]
    pub truncation: u64,
    /// Lags of the projection-tail bound check.
    #[serde(default = "default_lemma_grid")]
    pub lemma_grid: Vec<u64>,
    #[serde(default = "default_p")]
    pub lemma_p: f64,
    #[serde(default = "one")]
    pub lemma_q: f64,
}

fn default_identity_n() -> usize {
    10
}
fn default_identity_big_n() -> u64 {
    20
}
fn default_truncation() -> u64 {
    1000
}
fn default_lemma_grid() -> Vec<u64> {
    (1..=8).map(|j| 1u64 << j).collect()
}
fn one() -> f64 {
    1.0
}

impl Default for DecomposeSection {
    fn default() -> Self {
        DecomposeSection {
            identity_n: default_identity_n(),
            identity_big_n: default_identity_big_n(),
            truncation: default_truncation(),
            lemma_grid: default_lemma_grid(),
            lemma_p: default_p(),
            lemma_q: one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Directory scanned for run reports; the output directory when absent.
    #[serde(default)]
    pub input_dir: Option<PathBuf>,
}

/// Everything needed to re-run one command. Persisted next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Path length of `simulate` and `decompose`.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Lags or horizons; each command has its own default.
    #[serde(default)]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub process: Option<ProcessSpec>,
    #[serde(default)]
    pub coeffs: CoeffsSection,
    #[serde(default)]
    pub conditions: ConditionsSection,
    #[serde(default)]
    pub couple: CoupleSection,
    #[serde(default)]
    pub decompose: DecomposeSection,
    #[serde(default)]
    pub report: ReportSection,
}

fn default_replicas() -> usize {
    16
}
fn default_n() -> usize {
    1024
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("siplab-out")
}

impl ExperimentConfig {
    pub fn new(command: CommandKind) -> Self {
        ExperimentConfig {
            command,
            root_seed: 0,
            replicas: default_replicas(),
            n: default_n(),
            n_grid: None,
            output_dir: default_output_dir(),
            process: None,
            coeffs: CoeffsSection::default(),
            conditions: ConditionsSection::default(),
            couple: CoupleSection::default(),
            decompose: DecomposeSection::default(),
            report: ReportSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid configuration")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("configuration does not serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn process(&self) -> Result<&ProcessSpec> {
        match &self.process {
            Some(p) => Ok(p),
            None => bail!("missing field `process` (use --family or a [process] section)"),
        }
    }

    /// Checks fields that serde cannot.
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            bail!("field `replicas` must be positive");
        }
        if self.n == 0 {
            bail!("field `n` must be positive");
        }
        if let Some(g) = &self.n_grid {
            if g.is_empty() || g.windows(2).any(|w| w[1] <= w[0]) {
                bail!("field `n_grid` must be nonempty and strictly increasing");
            }
        }
        if let Some(p) = &self.process {
            p.validate().map_err(|e| anyhow::anyhow!("field `process`: {e}"))?;
        }
        if self.command != CommandKind::Report {
            self.process()?;
        }
        Ok(())
    }
}
