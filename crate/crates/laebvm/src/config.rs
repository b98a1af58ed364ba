//! Experiment configuration: strict JSON parsing, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use laebvm_core::nuisance::{esscher_scale, esscher_shift, Domain, ScoreFunction, DEFAULT_GRID_SIZE};
use laebvm_core::posterior::GridConfig;
use laebvm_core::{ModelSpec, ScorePriorSampler, ScorePriorVariant, ThetaPrior};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Risk,
    BvmParametric,
    BvmShift,
    BvmScale,
    LaeCheck,
    HellingerRate,
    KlDiag,
    PriorCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Risk => "risk",
            Self::BvmParametric => "bvm_parametric",
            Self::BvmShift => "bvm_shift",
            Self::BvmScale => "bvm_scale",
            Self::LaeCheck => "lae_check",
            Self::HellingerRate => "hellinger_rate",
            Self::KlDiag => "kl_diag",
            Self::PriorCheck => "prior_check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A score function given by a formula in the compact coordinate `u` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreSpec {
    Constant { value: f64 },
    /// `amplitude * sin(2 pi frequency u)`.
    Wave { amplitude: f64, frequency: f64 },
    /// Values on the uniform grid of `[0, 1]`.
    Grid { values: Vec<f64> },
}

impl Default for ScoreSpec {
    fn default() -> Self {
        Self::Constant { value: 0.0 }
    }
}

impl ScoreSpec {
    pub fn build(&self, domain: Domain, grid_size: usize, bound: f64) -> Result<ScoreFunction, ConfigError> {
        let values: Vec<f64> = match self {
            Self::Constant { value } => vec![*value; grid_size],
            Self::Wave { amplitude, frequency } => (0..grid_size)
                .map(|k| {
                    let u = k as f64 / (grid_size - 1) as f64;
                    amplitude * (2.0 * std::f64::consts::PI * frequency * u).sin()
                })
                .collect(),
            Self::Grid { values } => values.clone(),
        };
        ScoreFunction::new(domain, values, bound).map_err(|e| invalid("model.score", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Parametric {
        theta0: f64,
        lambda: f64,
    },
    SemiparamShift {
        theta0: f64,
        alpha: f64,
        bound: f64,
        #[serde(default)]
        score: ScoreSpec,
    },
    SemiparamScale {
        theta0: f64,
        bound: f64,
        #[serde(default)]
        score: ScoreSpec,
    },
}

impl ModelConfig {
    pub fn theta0(&self) -> f64 {
        match self {
            Self::Parametric { theta0, .. } | Self::SemiparamShift { theta0, .. } | Self::SemiparamScale { theta0, .. } => {
                *theta0
            }
        }
    }

    pub fn bound(&self) -> Option<f64> {
        match self {
            Self::Parametric { .. } => None,
            Self::SemiparamShift { bound, .. } | Self::SemiparamScale { bound, .. } => Some(*bound),
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, Self::Parametric { .. })
    }

    /// The model with its true nuisance.
    pub fn build(&self, grid_size: usize) -> Result<ModelSpec, ConfigError> {
        let wrap = |e: laebvm_core::models::ModelError| invalid("model", e.to_string());
        match self {
            Self::Parametric { theta0, lambda } => ModelSpec::parametric(*theta0, *lambda).map_err(wrap),
            Self::SemiparamShift {
                theta0,
                alpha,
                bound,
                score,
            } => {
                let s = score.build(Domain::HalfLine, grid_size, *bound)?;
                let eta0 = esscher_shift(&s, *alpha).map_err(|e| invalid("model.alpha", e.to_string()))?;
                ModelSpec::shift(*theta0, eta0).map_err(wrap)
            }
            Self::SemiparamScale { theta0, bound, score } => {
                let s = score.build(Domain::UnitInterval, grid_size, *bound)?;
                let eta0 = esscher_scale(&s, *bound).map_err(|e| invalid("model.bound", e.to_string()))?;
                ModelSpec::scale(*theta0, eta0).map_err(wrap)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub theta: ThetaPrior,
    /// Radius of the score ball the Brownian prior lives in; the model bound
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_bound: Option<f64>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

/// Configuration as written in the file. Everything but the experiment and
/// the seed has a per-experiment default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    master_seed: Option<u64>,
    model: Option<ModelConfig>,
    prior: Option<PriorConfig>,
    n_list: Option<Vec<usize>>,
    replicates: Option<usize>,
    nuisance_draws: Option<usize>,
    grid: Option<GridConfig>,
    h: Option<f64>,
    rho: Option<f64>,
    m: Option<f64>,
    output_dir: Option<PathBuf>,
}

/// Normalized configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub master_seed: u64,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub nuisance_draws: usize,
    pub grid: GridConfig,
    /// Local parameter used by `lae_check`, `hellinger_rate` and the cone probe.
    pub h: f64,
    /// Neighbourhood radius for `kl_diag`.
    pub rho: f64,
    /// Half-width of the `h` range in `K_n(rho, M)`.
    pub m: f64,
    pub output_dir: PathBuf,
}

/// Scalar overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn default_model(e: Experiment) -> ModelConfig {
    match e {
        Experiment::Risk | Experiment::BvmParametric => ModelConfig::Parametric {
            theta0: 0.0,
            lambda: 1.0,
        },
        Experiment::BvmScale => ModelConfig::SemiparamScale {
            theta0: 2.0,
            bound: 1.0,
            score: ScoreSpec::default(),
        },
        Experiment::LaeCheck => ModelConfig::SemiparamShift {
            theta0: 0.0,
            alpha: 1.0,
            bound: 0.5,
            score: ScoreSpec::Wave {
                amplitude: 0.4,
                frequency: 1.0,
            },
        },
        _ => ModelConfig::SemiparamShift {
            theta0: 0.0,
            alpha: 1.0,
            bound: 0.5,
            score: ScoreSpec::default(),
        },
    }
}

fn default_n_list(e: Experiment) -> Vec<usize> {
    match e {
        Experiment::Risk => vec![50],
        Experiment::BvmParametric => vec![25, 100, 400],
        Experiment::BvmShift | Experiment::BvmScale => vec![50, 200],
        Experiment::LaeCheck | Experiment::HellingerRate => vec![100, 1000, 10_000],
        Experiment::KlDiag => vec![100, 1000],
        Experiment::PriorCheck => vec![1],
    }
}

fn default_replicates(e: Experiment) -> usize {
    match e {
        Experiment::Risk => 100_000,
        Experiment::BvmParametric | Experiment::LaeCheck => 200,
        Experiment::BvmShift | Experiment::BvmScale => 100,
        Experiment::HellingerRate | Experiment::KlDiag => 1,
        Experiment::PriorCheck => 1000,
    }
}

fn default_draws(e: Experiment) -> usize {
    match e {
        Experiment::HellingerRate | Experiment::KlDiag => 100,
        _ => 500,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)?;
        let e = raw.experiment;
        let master_seed = overrides
            .master_seed
            .or(raw.master_seed)
            .ok_or_else(|| invalid("master_seed", "required; runs are never seeded from the clock"))?;
        let model = raw.model.unwrap_or_else(|| default_model(e));
        let prior = raw.prior.unwrap_or(PriorConfig {
            theta: match model {
                ModelConfig::SemiparamScale { .. } => ThetaPrior::Uniform { a: 0.5, b: 4.0 },
                _ => ThetaPrior::Gaussian {
                    mean: model.theta0(),
                    sd: 1.0,
                },
            },
            score_bound: None,
            grid_size: DEFAULT_GRID_SIZE,
        });
        let cfg = Self {
            experiment: e,
            master_seed,
            model,
            prior,
            n_list: raw.n_list.unwrap_or_else(|| default_n_list(e)),
            replicates: raw.replicates.unwrap_or_else(|| default_replicates(e)),
            nuisance_draws: raw.nuisance_draws.unwrap_or_else(|| default_draws(e)),
            grid: raw.grid.unwrap_or_default(),
            h: raw.h.unwrap_or(1.0),
            rho: raw.rho.unwrap_or(0.1),
            m: raw.m.unwrap_or(1.0),
            output_dir: overrides
                .output_dir
                .clone()
                .or(raw.output_dir)
                .unwrap_or_else(|| PathBuf::from("out").join(e.name())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, overrides)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_list.is_empty() {
            return Err(invalid("n_list", "must not be empty"));
        }
        if self.n_list[0] == 0 {
            return Err(invalid("n_list", "sample sizes must be at least 1"));
        }
        if !self.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("n_list", "must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.nuisance_draws == 0 {
            return Err(invalid("nuisance_draws", "must be at least 1"));
        }
        self.grid.validate().map_err(|e| invalid("grid", e.to_string()))?;
        if self.prior.grid_size < 2 {
            return Err(invalid("prior.grid_size", "must be at least 2"));
        }
        if let Some(b) = self.prior.score_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(invalid("prior.score_bound", "must be positive"));
            }
        }
        for (field, v) in [("h", self.h), ("rho", self.rho), ("m", self.m)] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if !(self.rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        if !(self.m > 0.0) {
            return Err(invalid("m", "must be positive"));
        }
        let kind_ok = match self.experiment {
            Experiment::Risk | Experiment::BvmParametric => self.model.is_parametric(),
            Experiment::BvmShift => matches!(self.model, ModelConfig::SemiparamShift { .. }),
            Experiment::BvmScale => matches!(self.model, ModelConfig::SemiparamScale { .. }),
            Experiment::PriorCheck | Experiment::KlDiag => !self.model.is_parametric(),
            Experiment::LaeCheck | Experiment::HellingerRate => true,
        };
        if !kind_ok {
            return Err(invalid("model", format!("model kind does not fit experiment {}", self.experiment)));
        }
        // building checks every model constant and the score ball
        self.model.build(self.prior.grid_size)?;
        Ok(())
    }

    pub fn spec(&self) -> Result<ModelSpec, ConfigError> {
        self.model.build(self.prior.grid_size)
    }

    /// Brownian score prior for the semiparametric models.
    pub fn score_sampler(&self, master_seed: u64) -> Option<ScorePriorSampler> {
        let variant = match self.model {
            ModelConfig::Parametric { .. } => return None,
            ModelConfig::SemiparamShift { .. } => ScorePriorVariant::Compactified,
            ModelConfig::SemiparamScale { .. } => ScorePriorVariant::UnitInterval,
        };
        let bound = self.prior.score_bound.or(self.model.bound())?;
        Some(ScorePriorSampler::new(bound, variant, self.prior.grid_size, master_seed))
    }

    /// Canonical JSON of the normalized config (keys in declaration order).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`] without the output directory, so
    /// relocating a run keeps its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(c.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
