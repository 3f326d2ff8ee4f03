//! Experiment configuration files.
//!
//! A config is a TOML document with a `kind`, a seed list and one section per
//! module the experiment touches. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use optac_core::crff::SweepSpec;
use optac_core::envgen::{gen_lowrank, gen_model_class, ModelClass};
use optac_core::mdp::LowRankMdp;
use optac_core::optac::OptAcConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing section [{0}] required by kind `{1}`")]
    MissingSection(&'static str, &'static str),
    #[error("config kind `{found}` cannot be run by `{command}`")]
    WrongKind { found: &'static str, command: &'static str },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Optac,
    OptacMisspecified,
    CrffSweep,
    OracleBench,
    Lemmas,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Optac => "optac",
            Kind::OptacMisspecified => "optac-misspecified",
            Kind::CrffSweep => "crff-sweep",
            Kind::OracleBench => "oracle-bench",
            Kind::Lemmas => "lemmas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub rank: usize,
}

impl EnvSection {
    pub fn build(&self) -> Result<LowRankMdp, ConfigError> {
        gen_lowrank(self.seed, self.n_states, self.n_actions, self.horizon, self.rank).map_err(|e| {
            ConfigError::Invalid {
                key: "env",
                message: e.to_string(),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub size: usize,
    pub seed: u64,
}

impl ClassSection {
    pub fn build(&self, env: &LowRankMdp) -> Result<ModelClass, ConfigError> {
        gen_model_class(env, self.size, self.seed).map_err(|e| ConfigError::Invalid {
            key: "class",
            message: e.to_string(),
        })
    }
}

/// Extra iteration counts run alongside `optac.iterations` for rate checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecSection {
    pub zetas: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Bump { dim: usize },
    Gaussian { dim: usize, mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrffSection {
    pub density: DensitySpec,
    pub grid_points: usize,
    pub radius_axis: optac_core::crff::RadiusSweep,
    pub feature_axis: optac_core::crff::FeatureSweep,
    pub sample_axis: optac_core::crff::SampleSweep,
}

impl CrffSection {
    pub fn spec(&self, seeds: Vec<u64>) -> SweepSpec {
        SweepSpec {
            radius_axis: self.radius_axis.clone(),
            feature_axis: self.feature_axis.clone(),
            sample_axis: self.sample_axis.clone(),
            seeds,
            grid_points: self.grid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Regression samples per stage for every oracle.
    pub n_samples: Vec<usize>,
    /// Constrained-planning thresholds, as margins below the best log-likelihood.
    pub margins: Vec<f64>,
    /// Transitions per step used to score the class.
    pub data_per_step: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    optac_core::oracles::DEFAULT_RIDGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmasSection {
    pub trials: usize,
    /// Lemma ids; all deterministic checks when absent.
    #[serde(default)]
    pub lemmas: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub env: Option<EnvSection>,
    #[serde(default)]
    pub class: Option<ClassSection>,
    #[serde(default)]
    pub optac: Option<OptAcConfig>,
    #[serde(default)]
    pub scaling: Option<ScalingSection>,
    #[serde(default)]
    pub misspec: Option<MisspecSection>,
    #[serde(default)]
    pub crff: Option<CrffSection>,
    #[serde(default)]
    pub bench: Option<BenchSection>,
    #[serde(default)]
    pub lemmas: Option<LemmasSection>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    fn require<'a, T>(&self, section: &'a Option<T>, name: &'static str) -> Result<&'a T, ConfigError> {
        section.as_ref().ok_or(ConfigError::MissingSection(name, self.kind.name()))
    }

    pub fn env(&self) -> Result<&EnvSection, ConfigError> {
        self.require(&self.env, "env")
    }

    pub fn class(&self) -> Result<&ClassSection, ConfigError> {
        self.require(&self.class, "class")
    }

    pub fn optac(&self) -> Result<&OptAcConfig, ConfigError> {
        self.require(&self.optac, "optac")
    }

    pub fn misspec(&self) -> Result<&MisspecSection, ConfigError> {
        self.require(&self.misspec, "misspec")
    }

    pub fn crff(&self) -> Result<&CrffSection, ConfigError> {
        self.require(&self.crff, "crff")
    }

    pub fn bench(&self) -> Result<&BenchSection, ConfigError> {
        self.require(&self.bench, "bench")
    }

    pub fn lemmas(&self) -> Result<&LemmasSection, ConfigError> {
        self.require(&self.lemmas, "lemmas")
    }

    /// Checks that the sections the kind needs are present and well formed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid {
                key: "seeds",
                message: "at least one seed is required".into(),
            });
        }
        match self.kind {
            Kind::Optac | Kind::OptacMisspecified => {
                self.env()?;
                self.class()?;
                self.optac()?.validate().map_err(|e| ConfigError::Invalid {
                    key: "optac",
                    message: e.to_string(),
                })?;
                if let Some(s) = &self.scaling {
                    if s.iterations.contains(&0) {
                        return Err(ConfigError::Invalid {
                            key: "scaling.iterations",
                            message: "iteration counts must be positive".into(),
                        });
                    }
                }
                if self.kind == Kind::OptacMisspecified {
                    let m = self.misspec()?;
                    if m.zetas.is_empty() {
                        return Err(ConfigError::Invalid {
                            key: "misspec.zetas",
                            message: "at least one zeta is required".into(),
                        });
                    }
                }
            }
            Kind::CrffSweep => {
                let c = self.crff()?;
                let dim = match c.density {
                    DensitySpec::Bump { dim } | DensitySpec::Gaussian { dim, .. } => dim,
                };
                if dim == 0 {
                    return Err(ConfigError::Invalid {
                        key: "crff.density.dim",
                        message: "dimension must be positive".into(),
                    });
                }
            }
            Kind::OracleBench => {
                self.env()?;
                self.class()?;
                let b = self.bench()?;
                if b.n_samples.is_empty() || b.n_samples.contains(&0) {
                    return Err(ConfigError::Invalid {
                        key: "bench.n_samples",
                        message: "sample counts must be a nonempty list of positive values".into(),
                    });
                }
            }
            Kind::Lemmas => {
                let l = self.lemmas()?;
                for name in l.lemmas.iter().flatten() {
                    if optac_core::lemmalab::LemmaId::parse(name).is_none() {
                        return Err(ConfigError::Invalid {
                            key: "lemmas.lemmas",
                            message: format!("unknown lemma `{name}`"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn expect_kind(&self, allowed: &[Kind], command: &'static str) -> Result<(), ConfigError> {
        if allowed.contains(&self.kind) {
            Ok(())
        } else {
            Err(ConfigError::WrongKind {
                found: self.kind.name(),
                command,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "optac"
seeds = [0, 1]

[env]
seed = 7
n_states = 20
n_actions = 4
horizon = 5
rank = 3

[class]
size = 32
seed = 11

[optac]
iterations = 10
"#;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_optac_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.kind, Kind::Optac);
        assert_eq!(c.optac.unwrap().iterations, 10);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("n_states = 20\n", "");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("n_states"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = MINIMAL.replace("size = 32", "size = 32\nsizes = 4");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("sizes") && err.contains("line"), "{err}");
    }

    #[test]
    fn missing_section() {
        let text = MINIMAL.replace("[class]\nsize = 32\nseed = 11\n", "");
        assert!(matches!(parse(&text), Err(ConfigError::MissingSection("class", "optac"))));
    }

    #[test]
    fn invalid_optac_values() {
        let text = MINIMAL.replace("iterations = 10", "iterations = 10\ndelta = 2.0");
        assert!(matches!(parse(&text), Err(ConfigError::Invalid { key: "optac", .. })));
    }

    #[test]
    fn unknown_lemma() {
        let text = "kind = \"lemmas\"\nseeds = [1]\n[lemmas]\ntrials = 3\nlemmas = [\"nope\"]\n";
        assert!(matches!(parse(text), Err(ConfigError::Invalid { key: "lemmas.lemmas", .. })));
    }
}
