//! Experiment configuration: a sectioned plain-text file with documented
//! keys and strict unknown-key rejection, chosen so a config file pins an
//! experiment completely.  The parsed form round-trips through serialization
//! losslessly, and its canonical serialization is what gets hashed into the
//! artifact manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rb_core::greedy::MRule;
use rb_core::param::ParameterDomain;
use rb_core::scm::{ScmConfig, ScmMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub problem: ProblemSection,
    pub training: TrainingSection,
    pub test: TestSection,
    pub sampling: SamplingSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub scm: ScmSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Directory-safe experiment name; artifacts land under `<out>/<name>/`.
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    ThermalBlock,
    Helmholtz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    /// Parameter box, one entry per parameter.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Thermal block: mesh cells per side (a multiple of 3).
    pub cells: Option<usize>,
    /// Wave problem: spectral elements and polynomial degree.
    pub elements: Option<usize>,
    pub degree: Option<usize>,
    /// Reference parameter freezing the inner product when it is
    /// parameter-dependent; defaults to the box midpoint.
    pub mu_bar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub kind: SampleKind,
    /// Grid: points per parameter axis.
    pub n_per_dim: Option<Vec<usize>>,
    /// Random: sample count and seed.
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    /// Truth-error greedy (needs all training solves).
    Strong,
    /// Residual/stability-bound greedy.
    WeakStd,
    /// Two-level greedy with derivative enrichment of the comparison space.
    WeakHier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub kind: SamplingKind,
    pub n_max: usize,
    /// Stopping tolerance on the selector maximum.
    pub tol: f64,
    /// Two-level greedy: enrichment stops once the saturation estimate drops
    /// below this threshold.
    #[serde(default = "default_theta_tol")]
    pub theta_tol: f64,
    /// Two-level greedy: enrichment bookkeeping cap (`K_N < k_max`).
    #[serde(default = "default_k_max")]
    pub k_max: u32,
}

fn default_theta_tol() -> f64 {
    1.0
}

fn default_k_max() -> u32 {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MRuleSpec {
    NPlus1,
    NPlus2,
    NPlus3,
}

impl MRuleSpec {
    pub fn to_rule(self) -> MRule {
        match self {
            MRuleSpec::NPlus1 => MRule::NPlus1,
            MRuleSpec::NPlus2 => MRule::NPlus2,
            MRuleSpec::NPlus3 => MRule::NPlus3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            MRuleSpec::NPlus1 => "n_plus_1",
            MRuleSpec::NPlus2 => "n_plus_2",
            MRuleSpec::NPlus3 => "n_plus_3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSourceSpec {
    /// Exact extreme generalized singular values; oracle scale only.
    Exact,
    /// Successive-constraint lower bound (requires the [scm] section).
    Scm,
    /// Coefficient-minimum lower bound for parametrically coercive problems.
    MinTheta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Comparison-space rules for the prefix-pair tables and evaluations.
    #[serde(default = "default_m_rules")]
    pub m_rules: Vec<MRuleSpec>,
    #[serde(default = "default_beta_source")]
    pub beta_source: BetaSourceSpec,
    /// Reference parameter and stability constant for `min_theta`.
    pub mu_ref: Option<Vec<f64>>,
    pub beta_ref: Option<f64>,
}

fn default_m_rules() -> Vec<MRuleSpec> {
    vec![MRuleSpec::NPlus1, MRuleSpec::NPlus2]
}

fn default_beta_source() -> BetaSourceSpec {
    BetaSourceSpec::Exact
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            m_rules: default_m_rules(),
            beta_source: default_beta_source(),
            mu_ref: None,
            beta_ref: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScmModeSpec {
    Coercive,
    InfSupSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSection {
    pub mode: ScmModeSpec,
    pub m_alpha: usize,
    pub m_plus: usize,
    pub k_max: usize,
    pub gap_tol: f64,
}

impl Default for ScmSection {
    fn default() -> Self {
        let d = ScmConfig::new(ScmMode::Coercive);
        Self {
            mode: ScmModeSpec::Coercive,
            m_alpha: d.m_alpha,
            m_plus: d.m_plus,
            k_max: d.k_max,
            gap_tol: d.gap_tol,
        }
    }
}

impl ScmSection {
    pub fn to_core(&self) -> ScmConfig {
        ScmConfig {
            mode: match self.mode {
                ScmModeSpec::Coercive => ScmMode::Coercive,
                ScmModeSpec::InfSupSquared => ScmMode::InfSupSquared,
            },
            m_alpha: self.m_alpha,
            m_plus: self.m_plus,
            k_max: self.k_max,
            gap_tol: self.gap_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output root; overridden by `--out` and the `RBMOR_OUT` variable.
    pub dir: Option<PathBuf>,
    /// When set (the default), wall-time columns in CSV reports are written
    /// as zero so identical configs produce byte-identical reports.  Disable
    /// to record measured online times (timing studies).
    #[serde(default = "default_true")]
    pub deterministic: bool,
    /// Repetitions per online timing measurement (the median is reported).
    #[serde(default = "default_reps")]
    pub timing_reps: usize,
}

fn default_true() -> bool {
    true
}

fn default_reps() -> usize {
    11
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, deterministic: true, timing_reps: default_reps() }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialized form; input formatting and comments do not
    /// affect it.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash identifying the experiment for the manifest.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn domain(&self) -> anyhow::Result<ParameterDomain> {
        ParameterDomain::new(self.problem.lower.clone(), self.problem.upper.clone())
            .map_err(|e| anyhow::anyhow!("parameter box: {e}"))
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.experiment.name.is_empty()
            || !self
                .experiment
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            bail!(
                "experiment name {:?} must be nonempty and use only [A-Za-z0-9_-]",
                self.experiment.name
            );
        }
        let dim = self.problem.lower.len();
        if self.problem.upper.len() != dim || dim == 0 {
            bail!("parameter bounds must be nonempty and of equal length");
        }
        match self.problem.kind {
            ProblemKind::ThermalBlock => {
                if self.problem.cells.is_none() {
                    bail!("thermal_block needs problem.cells");
                }
                if dim != 2 {
                    bail!("thermal_block has two parameters, got a {dim}-dimensional box");
                }
            }
            ProblemKind::Helmholtz => {
                if self.problem.elements.is_none() || self.problem.degree.is_none() {
                    bail!("helmholtz needs problem.elements and problem.degree");
                }
                if dim != 1 {
                    bail!("helmholtz has one parameter, got a {dim}-dimensional box");
                }
            }
        }
        if let Some(mu_bar) = &self.problem.mu_bar {
            if mu_bar.len() != dim {
                bail!("problem.mu_bar has length {}, expected {dim}", mu_bar.len());
            }
        }
        match self.training.kind {
            SampleKind::Grid => {
                let n = self
                    .training
                    .n_per_dim
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("grid training needs training.n_per_dim"))?;
                if n.len() != dim {
                    bail!("training.n_per_dim has length {}, expected {dim}", n.len());
                }
            }
            SampleKind::Random => {
                if self.training.n.is_none() || self.training.seed.is_none() {
                    bail!("random training needs training.n and training.seed");
                }
            }
        }
        if self.test.n == 0 {
            bail!("test.n must be positive");
        }
        if self.sampling.n_max == 0 {
            bail!("sampling.n_max must be positive");
        }
        if !(self.sampling.tol >= 0.0) {
            bail!("sampling.tol must be nonnegative");
        }
        if self.estimators.beta_source == BetaSourceSpec::MinTheta {
            let mu_ref = self
                .estimators
                .mu_ref
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("min_theta needs estimators.mu_ref"))?;
            if mu_ref.len() != dim {
                bail!("estimators.mu_ref has length {}, expected {dim}", mu_ref.len());
            }
            match self.estimators.beta_ref {
                Some(b) if b > 0.0 => {}
                _ => bail!("min_theta needs a positive estimators.beta_ref"),
            }
        }
        if self.output.timing_reps == 0 {
            bail!("output.timing_reps must be positive");
        }
        Ok(())
    }
}
