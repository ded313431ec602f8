use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{clip_action, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::{self, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearGaussianConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_std: f64,
    /// Scale applied to the random orthogonal drift matrix.
    pub drift_scale: f64,
    pub input_std: f64,
    /// Seed for drawing `A` and `B`.
    pub system_seed: u64,
    pub horizon: usize,
}

impl Default for LinearGaussianConfig {
    fn default() -> Self {
        Self {
            state_dim: 3,
            action_dim: 1,
            noise_std: 0.05,
            drift_scale: 0.9,
            input_std: 0.1,
            system_seed: 0,
            horizon: 200,
        }
    }
}

/// `s' = A s + B a + ε`, `ε ~ N(0, σ² I)`, reward `-|s|² - 0.1 |a|²`.
#[derive(Clone, Debug)]
pub struct LinearGaussianEnv {
    spec: EnvSpec,
    a: Array2<f64>,
    b: Array2<f64>,
    noise_std: f64,
    state: Array1<f64>,
    last_noise: Vec<f64>,
    noise_rng: RngStream,
    t: usize,
    clips: u64,
}

impl LinearGaussianEnv {
    pub fn new(cfg: &LinearGaussianConfig) -> Result<Self> {
        let mut rng = rng::stream(cfg.system_seed);
        let q = random_orthogonal(cfg.state_dim, &mut rng)?;
        let a = q * cfg.drift_scale;
        let b = Array2::from_shape_simple_fn((cfg.state_dim, cfg.action_dim), || {
            cfg.input_std * rng.sample::<f64, _>(StandardNormal)
        });
        Self::from_matrices(a, b, cfg.noise_std, cfg.horizon)
    }

    pub fn from_matrices(a: Array2<f64>, b: Array2<f64>, noise_std: f64, horizon: usize) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || b.nrows() != d {
            return Err(Error::config("A must be square and B must have state_dim rows"));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::config("noise_std must be non-negative"));
        }
        let spec = EnvSpec {
            state_dim: d,
            action_dim: b.ncols(),
            action_low: vec![-1.0; b.ncols()],
            action_high: vec![1.0; b.ncols()],
            horizon,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            a,
            b,
            noise_std,
            state: Array1::zeros(d),
            last_noise: vec![0.0; d],
            noise_rng: rng::stream(0),
            t: 0,
            clips: 0,
        })
    }

    pub fn drift(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn input_matrix(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Noise vector drawn by the most recent [`Environment::step`].
    pub fn last_noise(&self) -> &[f64] {
        &self.last_noise
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.spec.state_dim {
            return Err(Error::config("state has wrong dimension"));
        }
        self.state = Array1::from(state.to_vec());
        Ok(())
    }

    /// Noise-free successor `A s + B a`.
    pub fn mean_next(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let s = Array1::from(state.to_vec());
        let a = Array1::from(action.to_vec());
        (self.a.dot(&s) + self.b.dot(&a)).to_vec()
    }

    pub fn reward(state: &[f64], action: &[f64]) -> f64 {
        let ss: f64 = state.iter().map(|x| x * x).sum();
        let aa: f64 = action.iter().map(|x| x * x).sum();
        -ss - 0.1 * aa
    }
}

/// Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
    if d == 0 {
        return Err(Error::config("state_dim must be positive"));
    }
    let g = Array2::from_shape_simple_fn((d, d), || rng.sample::<f64, _>(StandardNormal));
    let mut q = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut v = g.column(j).to_owned();
        for k in 0..j {
            let qk = q.column(k);
            let proj = qk.dot(&v);
            v.scaled_add(-proj, &qk);
        }
        let norm = v.dot(&v).sqrt();
        if norm < 1e-12 {
            return Err(Error::config("degenerate random matrix"));
        }
        q.column_mut(j).assign(&(v / norm));
    }
    Ok(q)
}

impl Environment for LinearGaussianEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed);
        self.state = Array1::from_shape_simple_fn(self.spec.state_dim, || rng.sample(StandardNormal));
        self.noise_rng = rng;
        self.t = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.t >= self.spec.horizon {
            return Err(Error::Usage("step called after episode end".into()));
        }
        let (action, clipped) = clip_action(&self.spec, action)?;
        if clipped {
            self.clips += 1;
        }
        let state = self.state.to_vec();
        let reward = Self::reward(&state, &action);
        let mut next = self.mean_next(&state, &action);
        for (i, x) in next.iter_mut().enumerate() {
            let eps = self.noise_std * self.noise_rng.sample::<f64, _>(StandardNormal);
            self.last_noise[i] = eps;
            *x += eps;
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("linear-Gaussian state".into()));
        }
        self.state = Array1::from(next.clone());
        self.t += 1;
        Ok(StepResult {
            next_state: next,
            reward,
            done: self.t == self.spec.horizon,
        })
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn clip_count(&self) -> u64 {
        self.clips
    }
}
