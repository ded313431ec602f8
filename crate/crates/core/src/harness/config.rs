use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::reset::{LayerScope, MemberScope, ResetPolicy, ResetTarget};
use crate::sac::SacConfig;
use crate::world_model::WorldModelConfig;

/// Default model UTD ratio: one model training per 250 environment steps.
pub const D_UTD: f64 = 1.0 / 250.0;

/// Within-step ordering of model training and agent updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrder {
    /// Train the model, regenerate rollouts, then update the agent.
    #[default]
    ModelFirst,
    /// Agent updates first, then model training.
    AgentFirst,
}

/// When model training happens, resolved from the model UTD ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSchedule {
    /// One training every `T` post-warm-up steps.
    Every(u64),
    /// `n` trainings after every post-warm-up step.
    PerStep(usize),
}

impl ModelSchedule {
    /// Trainings due after post-warm-up step `t_post` (1-based).
    pub fn due(self, t_post: u64) -> usize {
        match self {
            ModelSchedule::Every(t) => usize::from(t_post.is_multiple_of(t)),
            ModelSchedule::PerStep(n) => n,
        }
    }

    /// Total trainings over `n_post` post-warm-up steps.
    pub fn total(self, n_post: u64) -> u64 {
        match self {
            ModelSchedule::Every(t) => n_post / t,
            ModelSchedule::PerStep(n) => n_post * n as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    /// Label recorded in the event log.
    pub variant: String,
    pub seed: u64,
    /// Total environment steps `N`, warm-up included.
    pub total_steps: u64,
    pub warmup_steps: u64,
    /// Model trainings per environment step (`U_m`).
    pub model_utd: f64,
    /// Gradient steps per member in one model training.
    pub model_train_steps: usize,
    /// Agent updates per environment step (`U_a`).
    pub agent_utd: usize,
    /// Rollout starts per model training, or per step with `rollout_every_step`.
    pub rollout_starts: usize,
    pub rollout_length: usize,
    /// Branch rollouts after every post-warm-up step instead of only after
    /// each model training.
    pub rollout_every_step: bool,
    pub batch_size: usize,
    pub model_batch_size: usize,
    pub real_ratio: f64,
    /// `D_env` capacity; defaults to `total_steps`.
    pub env_capacity: Option<usize>,
    /// `D_model` capacity; defaults to one training event's rollouts, or
    /// 250 steps' worth with `rollout_every_step`.
    pub model_capacity: Option<usize>,
    pub order: StepOrder,
    pub checkpoint_interval: u64,
    pub eval_episodes: usize,
    pub metric_batch_size: usize,
    /// Steps after a reset at which the MMSE probe is taken.
    pub reset_probe_delay: u64,
    pub probe_batch_size: usize,
    pub record_wall_time: bool,
    pub save_checkpoints: bool,
    pub reset: ResetPolicy,
    pub model: WorldModelConfig,
    pub sac: SacConfig,
    pub out_dir: PathBuf,
    /// Pre-filled `D_env`; replaces the warm-up phase.
    pub buffer_in: Option<PathBuf>,
    pub buffer_out: Option<PathBuf>,
    pub reserved_buffer: Option<PathBuf>,
    /// Agent checkpoint whose stochastic policy drives the warm-up.
    pub warmup_agent: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::Pendulum,
            variant: "default".into(),
            seed: 0,
            total_steps: 20_000,
            warmup_steps: 1000,
            model_utd: D_UTD,
            model_train_steps: 200,
            agent_utd: 20,
            rollout_starts: 400,
            rollout_length: 1,
            rollout_every_step: false,
            batch_size: 256,
            model_batch_size: 256,
            real_ratio: 0.05,
            env_capacity: None,
            model_capacity: None,
            order: StepOrder::ModelFirst,
            checkpoint_interval: 250,
            eval_episodes: 3,
            metric_batch_size: 256,
            reset_probe_delay: 1000,
            probe_batch_size: 1024,
            record_wall_time: false,
            save_checkpoints: true,
            reset: ResetPolicy::default(),
            model: WorldModelConfig::default(),
            sac: SacConfig::default(),
            out_dir: PathBuf::from("runs/default"),
            buffer_in: None,
            buffer_out: None,
            reserved_buffer: None,
            warmup_agent: None,
        }
    }
}

/// Maps a TOML error to a parse error at its byte offset.
pub(crate) fn toml_error(e: toml::de::Error) -> Error {
    Error::Parse {
        offset: e.span().map(|s| s.start).unwrap_or(0),
        message: e.message().to_string(),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::config(format!("config file {} does not exist", path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(toml_error)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&read_text(path.as_ref())?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config encoding: {e}")))
    }

    /// Model UTD expressed as a multiple of [`D_UTD`].
    pub fn with_model_utd_multiplier(mut self, mult: f64) -> Self {
        self.model_utd = mult * D_UTD;
        self
    }

    pub fn model_schedule(&self) -> Result<ModelSchedule> {
        let u = self.model_utd;
        if !(u.is_finite() && u > 0.0) {
            return Err(Error::config(format!("model_utd {u} must be positive")));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        if u >= 1.0 {
            let n = u.round();
            if !close(u, n) {
                return Err(Error::config(format!("model_utd {u} >= 1 must be an integer")));
            }
            Ok(ModelSchedule::PerStep(n as usize))
        } else {
            let t = (1.0 / u).round();
            if !close(1.0 / u, t) {
                return Err(Error::config(format!("model_utd {u} is not 1/T for an integer T")));
            }
            Ok(ModelSchedule::Every(t as u64))
        }
    }

    pub fn post_warmup_steps(&self) -> u64 {
        if self.buffer_in.is_some() {
            self.total_steps
        } else {
            self.total_steps.saturating_sub(self.warmup_steps)
        }
    }

    pub fn resolved_model_capacity(&self) -> Result<usize> {
        if let Some(c) = self.model_capacity {
            return Ok(c);
        }
        let per_event = self.rollout_starts * self.rollout_length;
        if self.rollout_every_step {
            return Ok(per_event * (1.0 / D_UTD).round() as usize);
        }
        Ok(match self.model_schedule()? {
            ModelSchedule::Every(_) => per_event,
            ModelSchedule::PerStep(n) => per_event * n,
        }
        .max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be at least 1"));
        }
        self.model_schedule()?;
        if self.rollout_length == 0 || self.rollout_starts == 0 {
            return Err(Error::config("rollout_starts and rollout_length must be positive"));
        }
        if self.batch_size == 0 || self.model_batch_size == 0 || self.metric_batch_size == 0 || self.probe_batch_size == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::config("checkpoint_interval must be positive"));
        }
        if self.env_capacity == Some(0) || self.model_capacity == Some(0) {
            return Err(Error::config("buffer capacities must be positive"));
        }
        crate::replay::MixedSampler::new(self.real_ratio)?;
        self.reset.validate()?;
        self.model.validate()?;
        self.sac.validate()?;
        for (name, p) in [
            ("buffer_in", &self.buffer_in),
            ("reserved_buffer", &self.reserved_buffer),
            ("warmup_agent", &self.warmup_agent),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::config(format!("{name} {} does not exist", p.display())));
                }
            }
        }
        if self.buffer_in.is_some() && self.warmup_agent.is_some() {
            return Err(Error::config("buffer_in and warmup_agent are mutually exclusive"));
        }
        Ok(())
    }
}

/// Axes of a sweep; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    pub model_utd_multiplier: Vec<f64>,
    pub agent_utd: Vec<usize>,
    pub ensemble_size: Vec<usize>,
    pub reset_target: Vec<ResetTarget>,
    pub layer_scope: Vec<LayerScope>,
    pub member_scope: Vec<MemberScope>,
    pub reset_interval: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axes: SweepAxes,
    pub seeds: usize,
    /// Use the same seed list in every cell for paired comparisons.
    pub paired_seeds: bool,
    pub out_dir: PathBuf,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            axes: SweepAxes::default(),
            seeds: 5,
            paired_seeds: false,
            out_dir: PathBuf::from("runs/sweep"),
        }
    }
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(toml_error)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&read_text(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_from_utd() {
        let c = |u: f64| RunConfig {
            model_utd: u,
            ..RunConfig::default()
        };
        assert_eq!(c(D_UTD).model_schedule().unwrap(), ModelSchedule::Every(250));
        for (m, t) in [(2.0, 125), (5.0, 50), (10.0, 25)] {
            assert_eq!(c(m * D_UTD).model_schedule().unwrap(), ModelSchedule::Every(t));
        }
        assert_eq!(c(3.0).model_schedule().unwrap(), ModelSchedule::PerStep(3));
        assert!(c(1.5).model_schedule().unwrap_err().is_config());
        assert!(c(0.3).model_schedule().unwrap_err().is_config());
        assert!(c(0.0).model_schedule().is_err());
    }

    #[test]
    fn training_counts() {
        let s = ModelSchedule::Every(250);
        let n: usize = (1..=19_000).map(|t| s.due(t)).sum();
        assert_eq!(n as u64, s.total(19_000));
        assert_eq!(ModelSchedule::PerStep(2).total(10), 20);
    }

    #[test]
    fn toml_round_trip_and_sections() {
        let text = r#"
seed = 7
total_steps = 5000
agent_utd = 5

[env]
kind = "linear_gaussian"
noise_std = 0.0

[reset]
target = "world_model"
interval = 2000
layer_scope = { kind = "last_k", k = 2 }
mode = { kind = "ema", alpha = 0.8 }
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.reset.target, ResetTarget::WorldModel);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_toml_reports_offset() {
        let e = RunConfig::from_toml_str("seed = 1\ntotal_steps = \"many\"\n").unwrap_err();
        match e {
            Error::Parse { offset, .. } => assert!(offset >= 9, "offset {offset}"),
            other => panic!("{other}"),
        }
        assert!(RunConfig::from_toml_str("no_such_key = 1").is_err());
    }

    #[test]
    fn missing_paths_fail_validation() {
        let cfg = RunConfig {
            buffer_in: Some("/definitely/not/here.pbuf".into()),
            ..RunConfig::default()
        };
        assert!(cfg.validate().unwrap_err().is_config());
    }
}
