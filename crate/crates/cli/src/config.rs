use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use oodtune::baselines::{FgsmConfig, GaussianNoiseConfig};
use oodtune::bayesopt::BoConfig;
use oodtune::detectors::Family;
use oodtune::metrics::ObjectiveKind;
use oodtune::net::TrainConfig;
use oodtune::simulation::{SimulationConfig, DEFAULT_PAIR_SIZE};

use crate::exit::{Failure, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Ours,
    Gauss,
    Adv,
}

fn default_s_pairs() -> usize {
    3
}

fn default_pair_size() -> usize {
    DEFAULT_PAIR_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinePairs {
    #[serde(default = "default_s_pairs")]
    pub s_pairs: usize,
    #[serde(default = "default_pair_size")]
    pub pair_size: usize,
}

impl Default for BaselinePairs {
    fn default() -> Self {
        BaselinePairs {
            s_pairs: default_s_pairs(),
            pair_size: default_pair_size(),
        }
    }
}

/// Everything a pipeline command needs. Relative paths resolve against the
/// config file's directory. `seed` is the master seed and replaces
/// `simulation.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
    pub family: Family,
    #[serde(default)]
    pub objective: ObjectiveKind,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bo: BoConfig,
    #[serde(default)]
    pub noise: GaussianNoiseConfig,
    #[serde(default)]
    pub fgsm: FgsmConfig,
    #[serde(default)]
    pub baseline: BaselinePairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFile {
    pub name: String,
    pub path: PathBuf,
}

/// Sensitivity study: the model comes from `run` (trained on its corpus);
/// each tuning set pairs the model's validation rows with an OOD file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub run: RunConfig,
    pub id_test: PathBuf,
    pub tuning_sets: Vec<NamedFile>,
    pub test_sets: Vec<NamedFile>,
    pub families: Vec<Family>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(|e| Failure::new(Stage::Io, e))?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(|e| Failure::new(Stage::Usage, e))
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, Failure> {
        let mut cfg: RunConfig = read_json(path)?;
        cfg.finish(path.parent().unwrap_or(Path::new(".")), seed_override)?;
        Ok(cfg)
    }

    fn finish(&mut self, base: &Path, seed_override: Option<u64>) -> Result<(), Failure> {
        resolve(base, &mut self.corpus);
        if let Some(s) = seed_override {
            self.seed = s;
        }
        self.simulation.seed = self.seed;
        let check = || -> oodtune::Result<()> {
            self.train.validate()?;
            self.bo.validate()?;
            self.noise.validate()?;
            if self.baseline.s_pairs == 0 || self.baseline.pair_size == 0 {
                return Err(oodtune::Error::Invalid(
                    "baseline s_pairs and pair_size must be positive".into(),
                ));
            }
            Ok(())
        };
        check()
            .context("invalid config")
            .map_err(|e| Failure::new(Stage::Usage, e))
    }
}

impl SensitivityConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, Failure> {
        let mut cfg: SensitivityConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.run.finish(base, seed_override)?;
        resolve(base, &mut cfg.id_test);
        for f in cfg.tuning_sets.iter_mut().chain(cfg.test_sets.iter_mut()) {
            resolve(base, &mut f.path);
        }
        if cfg.tuning_sets.len() < 2 || cfg.families.is_empty() || cfg.test_sets.is_empty() {
            return Err(Failure::usage(anyhow::anyhow!(
                "sensitivity needs >= 2 tuning sets, >= 1 test set and >= 1 family"
            )));
        }
        Ok(cfg)
    }
}
