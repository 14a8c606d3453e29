//! JSON configuration documents for the `run`, `sample`, `audit`, and `params`
//! subcommands.

use std::path::{Path, PathBuf};

use dpnormopt_core::losses::PlantedLabels;
use dpnormopt_core::samplers::SamplerConfig;
use dpnormopt_core::{Domain, LossFamily, NormSpec, SamplerMethod, SensitivityFactor, Variant};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Reads and parses a JSON document.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.into(),
        source,
    })
}

/// An exponent `p`: a number `≥ 1` or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    Named(InfName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfName {
    Inf,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(p) => p,
            Self::Named(InfName::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryConfig {
    /// Vector `ℓp` on `ℝ^d`.
    Lp { p: Exponent },
    /// Schatten-`p` on `(d/cols) × cols` matrices; every `d` in the grid must
    /// be a multiple of `cols`.
    Schatten { p: Exponent, cols: usize },
}

impl GeometryConfig {
    pub fn p(&self) -> f64 {
        match self {
            Self::Lp { p } | Self::Schatten { p, .. } => p.value(),
        }
    }

    pub fn norm(&self, d: usize) -> Result<NormSpec, ConfigError> {
        let r = match self {
            Self::Lp { p } => NormSpec::lp(p.value(), d),
            Self::Schatten { p, cols } => {
                if *cols == 0 || d % cols != 0 {
                    return invalid(format!("d = {d} is not a multiple of cols = {cols}"));
                }
                NormSpec::schatten(p.value(), d / cols, *cols)
            }
        };
        r.map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Domain centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    /// Ball of the problem norm.
    Ball { radius: f64 },
    /// `[lo, hi]^d`.
    Box { lo: f64, hi: f64 },
}

impl DomainConfig {
    pub fn build(&self, norm: NormSpec) -> Result<Domain, ConfigError> {
        let d = norm.dim();
        let r = match self {
            Self::Ball { radius } => Domain::ball(norm, vec![0.0; d], *radius),
            Self::Box { lo, hi } => Domain::boxed(norm, vec![*lo; d], vec![*hi; d]),
        };
        r.map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn default_feature_scale() -> f64 {
    1.0
}
fn default_x_star_scale() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// Synthetic population around a planted point `x*` with
    /// `‖x*‖ = x_star_scale` in the problem norm. Features have dual norm
    /// `feature_scale`; with `rank` they lie in a fixed random subspace.
    Planted {
        labels: PlantedLabels,
        #[serde(default = "default_feature_scale")]
        feature_scale: f64,
        #[serde(default = "default_x_star_scale")]
        x_star_scale: f64,
        #[serde(default)]
        rank: Option<usize>,
    },
    /// Dataset file with header `a_1,...,a_d[,b]`. Each run draws `n` rows
    /// without replacement.
    Csv { path: PathBuf },
    /// All-zero features and labels, so every loss is constant.
    Constant,
}

fn default_repetitions() -> usize {
    20
}
fn default_tv_fraction() -> f64 {
    0.5
}
fn default_population_samples() -> usize {
    20_000
}
fn default_minimize_iterations() -> usize {
    20_000
}
fn default_variant() -> Variant {
    Variant::Erm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub domain: DomainConfig,
    pub loss: LossFamily,
    pub data: DataConfig,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub epsilons: Vec<f64>,
    /// Total `δ`, split between the mechanism and the sampler allowance.
    pub delta: f64,
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Defaults to hit-and-run with one retained draw. The seed is replaced
    /// per run.
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub sensitivity: SensitivityFactor,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tv_fraction")]
    pub tv_fraction: f64,
    /// When false, `runtime_ms` is written as 0 so that reruns produce
    /// identical files.
    #[serde(default)]
    pub record_runtime: bool,
    /// Fresh samples per population-risk estimate (SCO runs).
    #[serde(default = "default_population_samples")]
    pub population_samples: usize,
    #[serde(default = "default_minimize_iterations")]
    pub minimize_iterations: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let c: Self = load_json(path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.epsilons.is_empty() || self.ns.is_empty() || self.ds.is_empty() {
            return invalid("epsilons, ns and ds must be nonempty");
        }
        if self.repetitions < 1 {
            return invalid("repetitions must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return invalid(format!("delta must lie in (0, 1/2), got {}", self.delta));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return invalid(format!("epsilons must be positive, got {e}"));
        }
        if self.ns.contains(&0) || self.ds.contains(&0) {
            return invalid("ns and ds must be at least 1");
        }
        if self.variant.is_strongly_convex() {
            return invalid(format!(
                "variant {} needs strongly convex losses; the supported loss families are not",
                self.variant
            ));
        }
        if !(self.tv_fraction >= 0.0 && self.tv_fraction < 1.0) {
            return invalid("tv_fraction must lie in [0, 1)");
        }
        if self.variant == Variant::Sco && self.population_samples < 2 {
            return invalid("population_samples must be at least 2");
        }
        for &d in &self.ds {
            let norm = self.geometry.norm(d)?;
            self.domain.build(norm)?;
        }
        match &self.data {
            DataConfig::Planted {
                feature_scale,
                x_star_scale,
                rank,
                ..
            } => {
                if !(*feature_scale > 0.0) || !(*x_star_scale >= 0.0) {
                    return invalid("feature_scale must be positive and x_star_scale nonnegative");
                }
                if let Some(r) = rank {
                    if let Some(d) = self.ds.iter().find(|d| *r == 0 || *r > **d) {
                        return invalid(format!("rank {r} is not in [1, d] for d = {d}"));
                    }
                }
            }
            DataConfig::Csv { .. } => {
                if self.ds.len() != 1 {
                    return invalid("a csv dataset fixes d; ds must have one entry");
                }
            }
            DataConfig::Constant => {}
        }
        if let Some(s) = &self.sampler {
            s.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Sampler settings for one run.
    pub fn sampler_for(&self, seed: u64) -> SamplerConfig {
        let mut s = self
            .sampler
            .clone()
            .unwrap_or_else(|| SamplerConfig::new(SamplerMethod::HitAndRun, 1, 0));
        s.seed = seed;
        s
    }
}

fn default_gdp_instances() -> usize {
    500
}
fn default_shift_cases() -> usize {
    100
}
fn default_gibbs_targets() -> usize {
    50
}
fn default_kmu_tuples() -> usize {
    1000
}
fn default_concentration_samples() -> usize {
    20_000
}
fn default_mechanism_cases() -> usize {
    50
}

/// Counts and seed for the audit suite. Every field has a default, so `{}`
/// is a valid document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_gdp_instances")]
    pub gdp_instances: usize,
    #[serde(default = "default_shift_cases")]
    pub shift_cases: usize,
    #[serde(default = "default_gibbs_targets")]
    pub gibbs_targets: usize,
    #[serde(default = "default_kmu_tuples")]
    pub kmu_tuples: usize,
    /// Draws per concentration target; 0 skips the concentration audit.
    #[serde(default = "default_concentration_samples")]
    pub concentration_samples: usize,
    #[serde(default = "default_mechanism_cases")]
    pub mechanism_cases: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl AuditConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        load_json(path)
    }
}

/// Inputs of the `params` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsInput {
    /// Lipschitz constant `G`.
    pub g: f64,
    /// Regularizer range `Θ` (ERM and SCO).
    #[serde(default)]
    pub theta: Option<f64>,
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub c: SensitivityFactor,
    /// Loss strong convexity (strongly convex variants).
    #[serde(default)]
    pub mu_loss: Option<f64>,
}

impl ParamsInput {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        load_json(path)
    }
}
