//! Fixed-horizon control tasks used in place of MuJoCo.
//!
//! Neither environment terminates early: `done` fires exactly when the
//! episode reaches its horizon.

mod linear;
mod pendulum;

pub use linear::{LinearGaussianConfig, LinearGaussianEnv};
pub use pendulum::PendulumEnv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of an environment's spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::config("state and action dims must be positive"));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::config("action bounds do not match action_dim"));
        }
        if self
            .action_low
            .iter()
            .zip(&self.action_high)
            .any(|(lo, hi)| !(lo < hi))
        {
            return Err(Error::config("action_low must be below action_high"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        Ok(())
    }

    /// Midpoint and half-width of the action box, per dimension.
    pub fn action_center_and_scale(&self) -> (Vec<f64>, Vec<f64>) {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(lo, hi)| ((hi + lo) / 2.0, (hi - lo) / 2.0))
            .unzip()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Out-of-bounds actions are clipped and counted.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    fn state(&self) -> Vec<f64>;

    /// Number of actions clipped to the bounds since construction.
    fn clip_count(&self) -> u64;
}

/// Environment selection as it appears in run configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum EnvConfig {
    #[default]
    Pendulum,
    LinearGaussian(LinearGaussianConfig),
}


impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Pendulum => Box::new(PendulumEnv::new()),
            EnvConfig::LinearGaussian(cfg) => Box::new(LinearGaussianEnv::new(cfg)?),
        })
    }
}

/// Clips `action` into the bounds of `spec`, returning whether anything changed.
pub(crate) fn clip_action(spec: &EnvSpec, action: &[f64]) -> Result<(Vec<f64>, bool)> {
    if action.len() != spec.action_dim {
        return Err(Error::config(format!(
            "action has {} dims, environment expects {}",
            action.len(),
            spec.action_dim
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("environment action".into()));
    }
    let mut clipped = false;
    let out = action
        .iter()
        .zip(spec.action_low.iter().zip(&spec.action_high))
        .map(|(&a, (&lo, &hi))| {
            let c = a.clamp(lo, hi);
            clipped |= c != a;
            c
        })
        .collect();
    Ok((out, clipped))
}

/// Runs `n_episodes` episodes with actions chosen by `policy`, returning the
/// mean undiscounted return. Episode `i` starts from `reset(seed + i)`.
pub fn rollout_return<F>(
    env: &mut dyn Environment,
    n_episodes: usize,
    seed: u64,
    mut policy: F,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n_episodes == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ep in 0..n_episodes {
        let mut state = env.reset(seed.wrapping_add(ep as u64));
        loop {
            let action = policy(&state)?;
            let step = env.step(&action)?;
            total += step.reward;
            state = step.next_state;
            if step.done {
                break;
            }
        }
    }
    Ok(total / n_episodes as f64)
}
