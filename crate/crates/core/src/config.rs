//! Run configuration shared by every pipeline stage.
//!
//! A JSON object whose keys all have defaults; unknown keys are rejected and
//! values are range-checked by [`RunConfig::validate`]. The `GEOMATCH_SEED`
//! environment variable overrides `seed`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contact_maps::{ThresholdMetric, DEFAULT_CONTACT_THRESHOLD, DEFAULT_M};
use crate::dataset::{default_objects, SampleConfig, ToyOptions};
use crate::diffnet::AdamConfig;
use crate::evaluation::EvalConfig;
use crate::geometry::DEFAULT_KNN_K;
use crate::ik::IkOptions;
use crate::inference::DEFAULT_RANKS;
use crate::kinematics::DEFAULT_STANDOFF;
use crate::model::{LossConfig, ModelConfig, TrainConfig};
use crate::solver::TrfOptions;

pub const SEED_ENV: &str = "GEOMATCH_SEED";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    SeedEnv(String),
}

/// IK solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkConfig {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
    pub jacobian_step: f64,
    /// Palm distance from the object surface for the initial pose, meters.
    pub standoff: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        let t = TrfOptions::default();
        Self {
            max_iter: t.max_iter,
            ftol: t.ftol,
            xtol: t.xtol,
            gtol: t.gtol,
            jacobian_step: t.jacobian_step,
            standoff: DEFAULT_STANDOFF,
        }
    }
}

/// Default locations used when a command's path flag is omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub knn_k: usize,
    pub m: usize,
    pub threshold: f64,
    pub threshold_metric: ThresholdMetric,
    /// Object cloud size for generated data.
    pub object_samples: usize,
    /// Gripper cloud size for generated data.
    pub gripper_samples: usize,
    pub grasps_per_pair: usize,
    /// Subset of the built-in toy objects to generate; all when absent.
    pub toy_objects: Option<Vec<String>>,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lr: f64,
    pub epochs: usize,
    pub ranks: Vec<usize>,
    pub model: ModelConfig,
    pub ik: IkConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        let toy = ToyOptions::default();
        Self {
            seed: 0,
            knn_k: DEFAULT_KNN_K,
            m: DEFAULT_M,
            threshold: DEFAULT_CONTACT_THRESHOLD,
            threshold_metric: ThresholdMetric::Euclidean,
            object_samples: toy.object_samples,
            gripper_samples: toy.gripper_samples,
            grasps_per_pair: toy.grasps_per_pair,
            toy_objects: None,
            alpha: loss.alpha,
            beta: loss.beta,
            lambda_a: loss.lambda_a,
            lambda_b: loss.lambda_b,
            lr: AdamConfig::default().lr,
            epochs: 200,
            ranks: DEFAULT_RANKS.to_vec(),
            model: ModelConfig::default(),
            ik: IkConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    check(v > 0.0 && v.is_finite(), || format!("{name} = {v} must be finite and > 0"))
}

impl RunConfig {
    /// Parses and validates a config file, then applies `GEOMATCH_SEED`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        cfg.apply_seed_env()?;
        Ok(cfg)
    }

    /// Defaults plus the `GEOMATCH_SEED` override.
    pub fn from_env_defaults() -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_seed_env()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_seed_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = Self::parse_seed(&raw)?;
        }
        Ok(())
    }

    pub fn parse_seed(raw: &str) -> Result<u64, ConfigError> {
        raw.trim().parse().map_err(|_| ConfigError::SeedEnv(raw.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check((1..=64).contains(&self.knn_k), || format!("knn_k = {} must be in 1..=64", self.knn_k))?;
        check(self.m >= 1, || "m must be ≥ 1".into())?;
        positive("threshold", self.threshold)?;
        check(self.object_samples > self.knn_k && self.object_samples >= self.m, || {
            format!(
                "object_samples = {} must exceed knn_k and be at least m",
                self.object_samples
            )
        })?;
        check(self.gripper_samples >= 16 && self.gripper_samples > self.knn_k, || {
            format!("gripper_samples = {} must be ≥ 16 and exceed knn_k", self.gripper_samples)
        })?;
        check(self.grasps_per_pair >= 1, || "grasps_per_pair must be ≥ 1".into())?;
        check(self.toy_objects.as_ref().is_none_or(|ids| !ids.is_empty()), || {
            "toy_objects must not be empty".into()
        })?;
        self.toy_options()?;
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            check(v >= 0.0 && v.is_finite(), || format!("{name} = {v} must be finite and ≥ 0"))?;
        }
        check(self.alpha + self.beta > 0.0, || "alpha and beta cannot both be 0".into())?;
        positive("lambda_a", self.lambda_a)?;
        positive("lambda_b", self.lambda_b)?;
        check(self.lr > 0.0 && self.lr <= 1.0, || format!("lr = {} must be in (0, 1]", self.lr))?;
        check(self.epochs >= 1, || "epochs must be ≥ 1".into())?;
        check(!self.ranks.is_empty(), || "ranks must not be empty".into())?;
        let m = &self.model;
        check(
            [m.input_features, m.gcn_hidden, m.gcn_output, m.projection, m.ar_hidden]
                .iter()
                .all(|&w| w > 0),
            || "model widths must be > 0".into(),
        )?;
        check(m.input_features == 3, || "model.input_features must be 3 (xyz)".into())?;
        check(self.ik.max_iter >= 1, || "ik.max_iter must be ≥ 1".into())?;
        for (name, v) in [
            ("ik.ftol", self.ik.ftol),
            ("ik.xtol", self.ik.xtol),
            ("ik.gtol", self.ik.gtol),
            ("ik.jacobian_step", self.ik.jacobian_step),
        ] {
            positive(name, v)?;
        }
        check(self.ik.standoff >= 0.0 && self.ik.standoff.is_finite(), || {
            "ik.standoff must be ≥ 0".into()
        })?;
        self.eval.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            knn_k: self.knn_k,
            m: self.m,
            threshold: self.threshold,
            metric: self.threshold_metric,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            beta: self.beta,
            lambda_a: self.lambda_a,
            lambda_b: self.lambda_b,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            loss: self.loss_config(),
            seed: self.seed,
        }
    }

    pub fn ik_options(&self) -> IkOptions {
        IkOptions {
            trf: TrfOptions {
                max_iter: self.ik.max_iter,
                ftol: self.ik.ftol,
                xtol: self.ik.xtol,
                gtol: self.ik.gtol,
                jacobian_step: self.ik.jacobian_step,
            },
            standoff: self.ik.standoff,
        }
    }

    pub fn toy_options(&self) -> Result<ToyOptions, ConfigError> {
        let mut objects = default_objects();
        if let Some(ids) = &self.toy_objects {
            if let Some(bad) = ids.iter().find(|id| !objects.iter().any(|o| &o.id == *id)) {
                return Err(ConfigError::Invalid(format!("unknown toy object {bad}")));
            }
            objects.retain(|o| ids.contains(&o.id));
        }
        Ok(ToyOptions {
            object_samples: self.object_samples,
            gripper_samples: self.gripper_samples,
            grasps_per_pair: self.grasps_per_pair,
            knn_k: self.knn_k,
            threshold: self.threshold,
            metric: self.threshold_metric,
            objects,
            ..ToyOptions::default()
        })
    }
}
