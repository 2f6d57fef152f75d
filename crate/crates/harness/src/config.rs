//! Scenario configuration.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! name = "etc-ipw"
//! seed = 11
//! alpha = 0.05
//!
//! [model]
//! kind = "gaussian"
//! means = [0.0, 0.0]
//! variances = [1.0, 1.0]
//!
//! [design]
//! kind = "explore-then-commit"
//! t0 = 10
//! epsilon = 0.1
//!
//! [stopping]
//! kind = "fixed-horizon"
//! horizon = 20000
//!
//! [replications]
//! outer = 5000
//!
//! [estimation]
//! arm = 1
//! methods = ["ipw", "em"]
//! ```
//!
//! Optional `[estimation]`, `[confseq]` and `[inversion]` sections configure
//! the corresponding subcommands. Unknown keys are errors, and the
//! `schema_version` is checked before anything else is read.

use std::path::Path;

use serde::{Deserialize, Serialize};

use adaptinf::confseq::{Boundary, BoundaryKind};
use adaptinf::estimators::Scheme;
use adaptinf::experiment::check_compatible;
use adaptinf::invert::{check_inner_reps, ContextLaw, EtaPlugin, Statistic};
use adaptinf::{Design, OutcomeModel, StoppingRule};

/// The only schema this build reads.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("`{key}`: {message}")]
    Semantic { key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn semantic(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Semantic {
        key: key.to_owned(),
        message: message.to_string(),
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_prior() -> f64 {
    0.5
}

fn default_limit_draws() -> u64 {
    100_000
}

fn default_warmup() -> u64 {
    100
}

fn default_sigma() -> f64 {
    1.0
}

fn default_width_points() -> usize {
    40
}

fn default_statistic() -> String {
    "em-diff".into()
}

fn default_grid_n() -> usize {
    101
}

fn default_out_dir() -> String {
    "out".into()
}

fn yes() -> bool {
    true
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(x: &u64) -> bool {
    *x == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Master seed; every random draw derives from it.
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub model: OutcomeModel,
    pub design: Design,
    pub stopping: StoppingRule,
    pub replications: Replications,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confseq: Option<ConfseqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inversion: Option<InversionSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Replications {
    pub outer: u64,
    /// Replays per hypothesis for test inversion.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub inner: u64,
}

/// Estimators of one arm mean, evaluated on every outer replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    #[serde(default)]
    pub arm: usize,
    pub methods: Vec<Scheme>,
    /// Prior mean of the running-mean outcome regression.
    #[serde(default = "default_prior")]
    pub prior: f64,
    /// Value tested by the rejection rate; the true mean when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_value: Option<f64>,
    /// Scaling compared against `limit` by the `distribution` subcommand.
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub limit: LimitLaw,
    /// Draws from the limit sampler for two-sample comparisons.
    #[serde(default = "default_limit_draws")]
    pub limit_draws: u64,
}

/// How an estimate is standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// `(θ̂ − θ)/se`.
    #[default]
    Studentized,
    /// `√T (θ̂ − θ)` with `T` the number of rounds.
    RootHorizon,
    /// `√N_k (θ̂ − θ)` with `N_k` the pulls of the target arm.
    RootArmCount,
}

impl Scaling {
    pub fn column(&self) -> &'static str {
        match self {
            Scaling::Studentized => "studentized",
            Scaling::RootHorizon => "root_horizon",
            Scaling::RootArmCount => "root_arm_count",
        }
    }
}

/// Reference law for the standardized estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LimitLaw {
    #[default]
    StandardNormal,
    /// Two-component normal mixture of IPW under explore-then-commit.
    IpwMixture {
        epsilon: f64,
        #[serde(default)]
        variances: MixtureSource,
    },
    /// Empirical mean under explore-then-commit with `t0 = T/2`.
    ThreeZ { epsilon: f64 },
}

/// Which component variances the mixture uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureSource {
    /// Conditional-variance computation from the model's arm moments.
    #[default]
    Oracle,
    /// The closed-form display `2 + (1−ε)²/2`, `2 + ε²/2`.
    Display,
}

/// Boundary families by name, with their default shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryName {
    AlphaSpending,
    Stitched,
    NormalMixture,
}

impl BoundaryName {
    pub fn kind(&self) -> BoundaryKind {
        match self {
            BoundaryName::AlphaSpending => BoundaryKind::AlphaSpending,
            BoundaryName::Stitched => BoundaryKind::stitched(),
            BoundaryName::NormalMixture => BoundaryKind::NormalMixture { rho: None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtePair {
    pub treated: usize,
    pub control: usize,
}

/// Time-uniform coverage of arm-mean (and ATE) confidence sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfseqSpec {
    pub boundaries: Vec<BoundaryName>,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub arm: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ate: Option<AtePair>,
    /// Replications on which the experiment is rerun under the
    /// exclusion-stopping rule to confirm the stop lands on the first
    /// exclusion.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub stop_check: u64,
    /// Log-spaced rounds at which interval widths are recorded.
    #[serde(default = "default_width_points")]
    pub width_points: usize,
}

impl ConfseqSpec {
    pub fn boundary(&self, name: BoundaryName, alpha: f64) -> adaptinf::Result<Boundary> {
        Boundary::new(name.kind(), alpha, self.warmup, self.sigma)
    }
}

/// Effect grid `{k/scale : start ≤ k ≤ end}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGrid {
    pub start: i64,
    pub end: i64,
    pub scale: u64,
}

impl ThetaGrid {
    pub fn values(&self) -> Vec<f64> {
        (self.start..=self.end).map(|k| k as f64 / self.scale as f64).collect()
    }
}

/// Confidence sets by test inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSpec {
    #[serde(default = "default_statistic")]
    pub statistic: String,
    /// Points per axis of the mean grid.
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Coarse step for the two-pass set; the full grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
    /// Outer replications (from the first) for which whole sets are
    /// written.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub full_sets: u64,
    /// Effect grid of the contextual procedure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<ThetaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaPlugin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<ContextLaw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// Write one row per replication besides the summary.
    #[serde(default = "yes")]
    pub per_replication: bool,
    /// Write the first few trajectories as JSON lines (`simulate`).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub trajectories: u64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub quiet: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_out_dir(),
            per_replication: true,
            trajectories: 0,
            quiet: false,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn syntax(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    ConfigError::Syntax {
        line,
        column,
        message: e.message().to_owned(),
    }
}

/// Parses and validates a scenario.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let raw: toml::Table = toml::from_str(text).map_err(|e| syntax(text, &e))?;
    match raw.get("schema_version") {
        None => return Err(semantic("schema_version", "missing")),
        Some(toml::Value::Integer(v)) if *v == i64::from(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(semantic(
                "schema_version",
                format!("unsupported version {v}; this build reads version {SCHEMA_VERSION}"),
            ))
        }
    }
    let scenario: Scenario = toml::from_str(text).map_err(|e| syntax(text, &e))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

impl Scenario {
    /// The scenario with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(semantic("alpha", "must lie in (0, 1)"));
        }
        self.model.validate().map_err(|e| semantic("model", e))?;
        let k = self.model.n_arms();
        self.stopping.validate(k).map_err(|e| semantic("stopping", e))?;
        check_compatible(&self.model, &self.design, &self.stopping).map_err(|e| semantic("design", e))?;
        if let Some(est) = &self.estimation {
            if est.methods.is_empty() {
                return Err(semantic("estimation.methods", "at least one method"));
            }
            if est.arm >= k {
                return Err(semantic("estimation.arm", format!("arm {} of a {k}-armed model", est.arm)));
            }
            if let LimitLaw::IpwMixture { epsilon, .. } | LimitLaw::ThreeZ { epsilon } = est.limit {
                if !(epsilon > 0.0 && epsilon <= 0.5) {
                    return Err(semantic("estimation.limit.epsilon", "must lie in (0, 0.5]"));
                }
            }
        }
        if let Some(cs) = &self.confseq {
            if cs.boundaries.is_empty() {
                return Err(semantic("confseq.boundaries", "at least one boundary"));
            }
            for &b in &cs.boundaries {
                cs.boundary(b, self.alpha).map_err(|e| semantic("confseq", e))?;
            }
            if cs.arm >= k {
                return Err(semantic("confseq.arm", format!("arm {} of a {k}-armed model", cs.arm)));
            }
            if let Some(p) = cs.ate {
                if p.treated >= k || p.control >= k || p.treated == p.control {
                    return Err(semantic("confseq.ate", "two distinct arms of the model"));
                }
            }
        }
        if let Some(inv) = &self.inversion {
            check_inner_reps(self.alpha, self.replications.inner).map_err(|e| semantic("replications.inner", e))?;
            if self.model.is_contextual() {
                if inv.theta_grid.is_none() {
                    return Err(semantic("inversion.theta_grid", "required for a contextual model"));
                }
                if let Some(g) = inv.theta_grid {
                    if g.scale == 0 || g.end < g.start {
                        return Err(semantic("inversion.theta_grid", "needs scale > 0 and start ≤ end"));
                    }
                }
            } else {
                if !matches!(self.model, OutcomeModel::Bernoulli { .. }) {
                    return Err(semantic("model", "grid inversion needs Bernoulli arms"));
                }
                Statistic::parse(&inv.statistic).map_err(|e| semantic("inversion.statistic", e))?;
                if inv.grid_n < 2 {
                    return Err(semantic("inversion.grid_n", "at least two points per axis"));
                }
                adaptinf::invert::Grid::new(k, inv.grid_n).map_err(|e| semantic("inversion.grid_n", e))?;
                if inv.refine == Some(0) {
                    return Err(semantic("inversion.refine", "step must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Truth of the estimand of `[estimation]`.
    pub fn true_arm_mean(&self, arm: usize) -> f64 {
        self.model.arm_mean(arm)
    }
}
