//! Linear-Gaussian oracles for the world model: the exact-dynamics model and
//! the ensemble fit against the `2 d σ²` floor.

use model_reset::envs::{Environment, LinearGaussianConfig, LinearGaussianEnv};
use model_reset::metrics;
use model_reset::nn::AdamConfig;
use model_reset::replay::{ReplayBuffer, Transition};
use model_reset::rng::{self, RngStream};
use model_reset::world_model::{DynamicsModel, GaussianEnsemble, WorldModelConfig};
use model_reset::Result;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

pub const STATE_DIM: usize = 3;
pub const TRAIN_STEPS: usize = 8000;

pub fn env(noise_std: f64) -> LinearGaussianEnv {
    LinearGaussianEnv::new(&LinearGaussianConfig {
        state_dim: STATE_DIM,
        noise_std,
        ..LinearGaussianConfig::default()
    })
    .unwrap()
}

pub fn floor(noise_std: f64) -> f64 {
    2.0 * STATE_DIM as f64 * noise_std * noise_std
}

/// `n` transitions under uniform random actions, resetting every horizon.
pub fn collect(env: &mut LinearGaussianEnv, n: usize, seed: u64) -> ReplayBuffer {
    let spec = env.spec().clone();
    let mut buf = ReplayBuffer::new(n, spec.state_dim, spec.action_dim).unwrap();
    let mut r = rng::stream(seed);
    let mut s = env.reset(rng::derive_seed(seed, &[0]));
    let mut episode = 0;
    while buf.len() < n {
        let a: Vec<f64> = (0..spec.action_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let out = env.step(&a).unwrap();
        buf.push(Transition {
            s: s.clone(),
            a,
            r: out.reward,
            s_next: out.next_state.clone(),
            done: out.done,
        })
        .unwrap();
        s = if out.done {
            episode += 1;
            env.reset(rng::derive_seed(seed, &[episode]))
        } else {
            out.next_state
        };
    }
    buf
}

/// The true dynamics posing as a one-member model.
pub struct ExactModel(pub LinearGaussianEnv);

impl DynamicsModel for ExactModel {
    fn num_members(&self) -> usize {
        1
    }

    fn sample_member(
        &self,
        _member: usize,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        rng: &mut RngStream,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let sigma = self.0.noise_std();
        let mut next = Array2::zeros(states.raw_dim());
        let mut rewards = Array1::zeros(states.nrows());
        for i in 0..states.nrows() {
            let (s, a) = (states.row(i).to_vec(), actions.row(i).to_vec());
            for (j, m) in self.0.mean_next(&s, &a).into_iter().enumerate() {
                next[[i, j]] = m + sigma * rng.sample::<f64, _>(StandardNormal);
            }
            rewards[i] = LinearGaussianEnv::reward(&s, &a);
        }
        Ok((next, rewards))
    }
}

pub fn exact_model_mmse(noise_std: f64, n: usize, seed: u64) -> f64 {
    let mut e = env(noise_std);
    let buf = collect(&mut e, n, seed);
    let model = ExactModel(e);
    metrics::mmse_on_batch(&model, &buf.to_batch(), &mut rng::stream(seed ^ 0x5eed)).unwrap()
}

pub struct FitOutcome {
    pub mmse: f64,
    pub per_member: Vec<f64>,
    pub floor: f64,
}

/// Trains a 3-member ensemble on `n` transitions and reports MMSE over the
/// whole training buffer.
pub fn ensemble_fit(noise_std: f64, n: usize, train_steps: usize, seed: u64) -> FitOutcome {
    let mut e = env(noise_std);
    let buf = collect(&mut e, n, seed);
    let cfg = WorldModelConfig {
        ensemble_size: 3,
        hidden: vec![64; 4],
        adam: AdamConfig::with_learning_rate(1e-3),
        ..WorldModelConfig::default()
    };
    let mut model = GaussianEnsemble::new(STATE_DIM, 1, &cfg, rng::derive_seed(seed, &[1])).unwrap();
    model.train(&buf, train_steps, 256, &mut rng::stream(rng::derive_seed(seed, &[2]))).unwrap();
    let batch = buf.to_batch();
    let per_member =
        metrics::mmse_per_member(&model, &batch, &mut rng::stream(rng::derive_seed(seed, &[3]))).unwrap();
    FitOutcome {
        mmse: per_member.iter().sum::<f64>() / per_member.len() as f64,
        per_member,
        floor: floor(noise_std),
    }
}
