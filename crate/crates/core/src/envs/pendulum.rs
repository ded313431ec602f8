use std::f64::consts::PI;

use rand::Rng;

use super::{clip_action, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng;

const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;

/// Pendulum swing-up. Observation is `(cos θ, sin θ, θ̇)` with `θ = 0` upright.
#[derive(Clone, Debug)]
pub struct PendulumEnv {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    t: usize,
    clips: u64,
}

impl Default for PendulumEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl PendulumEnv {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-MAX_TORQUE],
                action_high: vec![MAX_TORQUE],
                horizon: 200,
            },
            theta: 0.0,
            theta_dot: 0.0,
            t: 0,
            clips: 0,
        }
    }

    /// Places the pendulum at an explicit angle and velocity mid-episode.
    pub fn set_angle(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    pub fn angular_acceleration(theta: f64, torque: f64) -> f64 {
        3.0 * GRAVITY / (2.0 * LENGTH) * theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * torque
    }

    /// Reward for being at `(θ, θ̇)` while applying `torque`.
    pub fn reward(theta: f64, theta_dot: f64, torque: f64) -> f64 {
        let th = wrap_angle(theta);
        -(th * th + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque)
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

/// Maps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Environment for PendulumEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed);
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.t >= self.spec.horizon {
            return Err(Error::Usage("step called after episode end".into()));
        }
        let (action, clipped) = clip_action(&self.spec, action)?;
        if clipped {
            self.clips += 1;
        }
        let u = action[0];
        let reward = Self::reward(self.theta, self.theta_dot, u);
        let acc = Self::angular_acceleration(self.theta, u);
        self.theta_dot = (self.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
        if !self.theta.is_finite() || !self.theta_dot.is_finite() {
            return Err(Error::NonFinite("pendulum state".into()));
        }
        self.t += 1;
        Ok(StepResult {
            next_state: self.observation(),
            reward,
            done: self.t == self.spec.horizon,
        })
    }

    fn state(&self) -> Vec<f64> {
        self.observation()
    }

    fn clip_count(&self) -> u64 {
        self.clips
    }
}
