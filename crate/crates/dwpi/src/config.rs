//! Run configuration: one JSON document driving every pipeline stage.
//!
//! The master seed is the only seed a user sets; every stage derives its
//! own stream from it, so re-running any command with the same config
//! reproduces its artifact byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::TrainConfig;
use crate::baselines::{BaselineConfig, MwalBeta};
use crate::envs::EnvSpec;
use crate::error::{DwpiError, Result};
use crate::model::FitConfig;
use crate::morl::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRef {
    /// `cdst` or `item_gathering`.
    pub name: String,
    /// Layout JSON path; omitted = the built-in default layout. Relative
    /// paths resolve against the config file's directory.
    #[serde(default)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSettings {
    pub count: usize,
    /// Greedy rollouts averaged into one return summary.
    pub episodes_per_sample: usize,
    /// Train/validation/test fractions; must sum to 1.
    pub fractions: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    pub iterations: usize,
    pub inner: TrainConfig,
    pub mwal_beta: MwalBeta,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Cap on benchmarked test demos; baselines re-solve RL per query, so
    /// the full test split is rarely affordable.
    #[serde(default)]
    pub max_queries: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { max_queries: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub environment: EnvironmentRef,
    pub grid_step: f64,
    pub train: TrainConfig,
    pub noise_eta: f64,
    pub demos: DemoSettings,
    pub fit: FitConfig,
    pub baseline: BaselineSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    pub out_dir: PathBuf,
    pub master_seed: u64,
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates, resolving a relative layout path against the
    /// config file's directory and deriving all stage seeds.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DwpiError::io(path.display().to_string(), e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(layout) = &cfg.environment.layout {
            if layout.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.environment.layout = Some(dir.join(layout));
                }
            }
        }
        cfg.apply_master_seed();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DwpiError::InvalidConfig(msg));
        match self.environment.name.as_str() {
            "cdst" | "item_gathering" => {}
            other => return fail(format!("unknown environment {other:?}")),
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return fail(format!("grid_step {} outside (0, 1]", self.grid_step));
        }
        self.train.validate()?;
        if !(self.noise_eta >= 0.0 && self.noise_eta.is_finite()) {
            return fail(format!("noise_eta {} must be >= 0", self.noise_eta));
        }
        if self.demos.count < 1 {
            return fail("demos.count must be >= 1".into());
        }
        if self.demos.episodes_per_sample < 1 {
            return fail("demos.episodes_per_sample must be >= 1".into());
        }
        self.fit.validate()?;
        if self.baseline.iterations < 1 {
            return fail("baseline.iterations must be >= 1".into());
        }
        self.baseline.inner.validate()?;
        if !(self.baseline.tolerance > 0.0) {
            return fail("baseline.tolerance must be > 0".into());
        }
        if let Some(0) = self.eval.max_queries {
            return fail("eval.max_queries must be >= 1 when set".into());
        }
        Ok(())
    }

    /// Overwrites every stage seed with a stream derived from the master
    /// seed, so the config document is the single source of randomness.
    pub fn apply_master_seed(&mut self) {
        self.train.seed = derive_seed(self.master_seed, 10, 0);
        self.fit.seed = derive_seed(self.master_seed, 12, 0);
        self.baseline.inner.seed = derive_seed(self.master_seed, 13, 0);
    }

    pub fn demo_seed(&self) -> u64 {
        derive_seed(self.master_seed, 11, 0)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.master_seed, 14, 0)
    }

    pub fn baseline_seed(&self) -> u64 {
        derive_seed(self.master_seed, 13, 1)
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        let spec = match &self.environment.layout {
            Some(path) => EnvSpec::load(path)?,
            None => match self.environment.name.as_str() {
                "cdst" => EnvSpec::default_cdst(),
                _ => EnvSpec::default_item_gathering(),
            },
        };
        if spec.name() != self.environment.name {
            return Err(DwpiError::InvalidConfig(format!(
                "layout file describes {:?}, config names {:?}",
                spec.name(),
                self.environment.name
            )));
        }
        Ok(spec)
    }

    /// Materializes the baseline config against a concrete environment,
    /// whose return bounds feed the MWAL gain normalization.
    pub fn baseline_config(&self, spec: &EnvSpec) -> BaselineConfig {
        BaselineConfig {
            iterations: self.baseline.iterations,
            inner: self.baseline.inner.clone(),
            mwal_beta: self.baseline.mwal_beta,
            return_bounds: spec.return_bounds(),
            tolerance: self.baseline.tolerance,
            seed: self.baseline_seed(),
        }
    }

    /// Hash of the effective config; stamped into sidecars and reports.
    pub fn config_hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }
}
