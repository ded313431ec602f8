//! Fits a Gaussian ensemble to a linear-Gaussian system and compares the
//! sampled next-state error with the analytic floor `2 d σ²`.
//!
//! cargo run --release --example linear_oracle_fit -- [transitions] [train_steps]

use model_reset::envs::{Environment, LinearGaussianConfig, LinearGaussianEnv};
use model_reset::metrics::mmse_per_member;
use model_reset::nn::AdamConfig;
use model_reset::replay::{ReplayBuffer, Transition};
use model_reset::rng;
use model_reset::world_model::{GaussianEnsemble, WorldModelConfig};
use rand::Rng;

fn collect(env: &mut LinearGaussianEnv, n: usize, seed: u64) -> model_reset::Result<ReplayBuffer> {
    let mut buf = ReplayBuffer::new(n, env.spec().state_dim, env.spec().action_dim)?;
    let mut r = rng::stream(seed);
    let mut s = env.reset(seed);
    let mut episode = 0;
    while buf.len() < n {
        let a = vec![r.random_range(-1.0..1.0)];
        let out = env.step(&a)?;
        buf.push(Transition {
            s,
            a,
            r: out.reward,
            s_next: out.next_state.clone(),
            done: out.done,
        })?;
        s = if out.done {
            episode += 1;
            env.reset(seed + episode)
        } else {
            out.next_state
        };
    }
    Ok(buf)
}

fn main() -> model_reset::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(20_000);
    let steps = args.get(1).copied().unwrap_or(8000);
    let chunk = (steps / 4).max(1);

    for sigma in [0.0, 0.05, 0.1] {
        let mut env = LinearGaussianEnv::new(&LinearGaussianConfig {
            noise_std: sigma,
            ..LinearGaussianConfig::default()
        })?;
        let d = env.spec().state_dim;
        let buf = collect(&mut env, n, 1)?;
        let cfg = WorldModelConfig {
            ensemble_size: 3,
            adam: AdamConfig::with_learning_rate(1e-3),
            ..WorldModelConfig::default()
        };
        let mut model = GaussianEnsemble::new(d, 1, &cfg, 2)?;
        let mut train_rng = rng::stream(3);
        let floor = 2.0 * d as f64 * sigma * sigma;
        println!("sigma {sigma}: floor {floor:.5}");
        let batch = buf.to_batch();
        for k in 1..=steps / chunk {
            let stats = model.train(&buf, chunk, 256, &mut train_rng)?;
            let per = mmse_per_member(&model, &batch, &mut rng::stream(4))?;
            let mean = per.iter().sum::<f64>() / per.len() as f64;
            println!(
                "  {:>6} steps  nll {:>8.4}  mmse {:.5}  members {:?}",
                k * chunk,
                stats.final_loss().unwrap_or(f64::NAN),
                mean,
                per.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}
