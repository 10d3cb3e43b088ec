//! Resolved run configuration shared by the CLI and the library.
//!
//! Every field has a default; fields with a published reference value
//! default to that value. `epochs` is the one deliberate exception: its
//! default is desk-scale so end-to-end runs finish on a single machine,
//! and it can be raised back to 1000.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Benchmark task names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    ReachPart,
    PickPart,
    PickPlace,
    TwoStageHang,
}

impl TaskName {
    pub const ALL: [TaskName; 4] = [
        TaskName::ReachPart,
        TaskName::PickPart,
        TaskName::PickPlace,
        TaskName::TwoStageHang,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::ReachPart => "reach-part",
            TaskName::PickPart => "pick-part",
            TaskName::PickPlace => "pick-place",
            TaskName::TwoStageHang => "two-stage-hang",
        }
    }

    /// Long-horizon tasks get a larger step budget and demo count.
    pub fn is_long_horizon(&self) -> bool {
        matches!(self, TaskName::TwoStageHang)
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// Reference keypoint proposal strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Kmeans,
    Random,
    Manual,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Kmeans => "kmeans",
            Strategy::Random => "random",
            Strategy::Manual => "manual",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Strategy::Kmeans),
            "random" => Ok(Strategy::Random),
            "manual" => Ok(Strategy::Manual),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected kmeans, random or manual)"
            ))),
        }
    }
}

/// Flat key-value run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskName,
    pub seed: u64,
    /// Number of reference keypoints N.
    pub n_keypoints: usize,
    pub strategy: Strategy,
    /// Feature noise level of the synthetic backend.
    pub feature_sigma: f64,
    /// Probability of an invalid-depth hole per pixel.
    pub depth_hole_prob: f64,
    /// Feature dimension D of the synthetic backend.
    pub feature_dim: usize,

    // descriptor encoder
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub feed_forward_size: usize,
    pub dropout_rate: f64,
    /// Fraction of keypoint tokens dropped per encoder call in training.
    pub token_dropout: f64,
    /// Token dropout used at inference inside the ensemble.
    pub eval_token_dropout: f64,

    // optimization
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of demos held out to pick the best checkpoint.
    pub validation_fraction: f64,

    // diffusion head
    pub denoising_steps_train: usize,
    pub denoising_steps_test: usize,
    pub prediction_horizon: usize,
    pub observation_horizon: usize,
    pub action_horizon: usize,

    // trajectory prediction head (cross-embodiment variant)
    pub traj_prediction_horizon: usize,
    pub traj_observation_horizon: usize,
    pub traj_action_horizon: usize,
    /// Reuse the policy encoder weights for the trajectory predictor
    /// instead of training a separate encoder.
    pub traj_share_encoder: bool,

    // inference ensemble
    pub ensemble_repeats: usize,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskName::PickPart,
            seed: 0,
            n_keypoints: 20,
            strategy: Strategy::Kmeans,
            feature_sigma: 0.05,
            depth_hole_prob: 0.01,
            feature_dim: 32,

            num_layers: 1,
            hidden_size: 128,
            num_heads: 8,
            feed_forward_size: 512,
            dropout_rate: 0.1,
            token_dropout: 0.2,
            eval_token_dropout: 0.2,

            epochs: 120,
            batch_size: 256,
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            validation_fraction: 0.1,

            denoising_steps_train: 100,
            denoising_steps_test: 10,
            prediction_horizon: 4,
            observation_horizon: 2,
            action_horizon: 2,

            traj_prediction_horizon: 8,
            traj_observation_horizon: 2,
            traj_action_horizon: 4,
            traj_share_encoder: true,

            ensemble_repeats: 20,

            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.n_keypoints > 0, "n_keypoints must be positive")?;
        check(self.feature_dim > 0, "feature_dim must be positive")?;
        check(
            self.feature_sigma.is_finite() && self.feature_sigma >= 0.0,
            "feature_sigma must be finite and non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&self.depth_hole_prob),
            "depth_hole_prob must lie in [0, 1]",
        )?;
        check(self.num_layers > 0, "num_layers must be positive")?;
        check(
            self.hidden_size > 0 && self.hidden_size % self.num_heads == 0,
            "hidden_size must be a positive multiple of num_heads",
        )?;
        check(self.feed_forward_size > 0, "feed_forward_size must be positive")?;
        check(
            (0.0..1.0).contains(&self.dropout_rate),
            "dropout_rate must lie in [0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.token_dropout),
            "token_dropout must lie in [0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.eval_token_dropout),
            "eval_token_dropout must lie in [0, 1)",
        )?;
        check(self.epochs > 0, "epochs must be positive")?;
        check(self.batch_size > 0, "batch_size must be positive")?;
        check(
            self.learning_rate.is_finite() && self.learning_rate > 0.0,
            "learning_rate must be positive",
        )?;
        check(
            self.weight_decay.is_finite() && self.weight_decay >= 0.0,
            "weight_decay must be non-negative",
        )?;
        check(
            (0.0..0.5).contains(&self.validation_fraction),
            "validation_fraction must lie in [0, 0.5)",
        )?;
        check(
            self.denoising_steps_train > 0,
            "denoising_steps_train must be positive",
        )?;
        if self.denoising_steps_test == 0 || self.denoising_steps_test > self.denoising_steps_train
        {
            return Err(Error::TooManySamplerSteps(
                self.denoising_steps_test,
                self.denoising_steps_train,
            ));
        }
        check(self.prediction_horizon > 0, "prediction_horizon must be positive")?;
        check(self.observation_horizon > 0, "observation_horizon must be positive")?;
        check(
            self.action_horizon > 0 && self.action_horizon <= self.prediction_horizon,
            "action_horizon must lie in [1, prediction_horizon]",
        )?;
        check(
            self.traj_prediction_horizon > 0,
            "traj_prediction_horizon must be positive",
        )?;
        check(
            self.traj_observation_horizon > 0,
            "traj_observation_horizon must be positive",
        )?;
        check(
            self.traj_action_horizon > 0
                && self.traj_action_horizon <= self.traj_prediction_horizon,
            "traj_action_horizon must lie in [1, traj_prediction_horizon]",
        )?;
        check(self.ensemble_repeats > 0, "ensemble_repeats must be positive")?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse, filling unset fields with defaults, then validate.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Fields that differ from the defaults, as `key: default -> actual`
    /// lines, so commands can log overrides.
    pub fn overrides(&self) -> Vec<String> {
        let def = serde_json::to_value(RunConfig::default()).expect("serializable");
        let cur = serde_json::to_value(self).expect("serializable");
        let (serde_json::Value::Object(def), serde_json::Value::Object(cur)) = (def, cur) else {
            unreachable!("RunConfig serializes to an object");
        };
        cur.iter()
            .filter(|(k, v)| def.get(*k) != Some(v))
            .map(|(k, v)| format!("{k}: {} -> {v}", def[k]))
            .collect()
    }
}
