//! Applies the reset operator family to a trained pendulum world model and
//! shows what each variant touches and how much it costs in model error.
//!
//! cargo run --release --example model_reset_variants

use model_reset::envs::{Environment, PendulumEnv};
use model_reset::metrics::mmse_on_batch;
use model_reset::replay::{ReplayBuffer, Transition};
use model_reset::reset::{apply_reset, LayerScope, MemberScope, ResetMode, ResetPolicy, ResetTarget};
use model_reset::rng;
use model_reset::sac::{SacAgent, SacConfig};
use model_reset::world_model::{GaussianEnsemble, WorldModelConfig};
use rand::Rng;

fn main() -> model_reset::Result<()> {
    let mut env = PendulumEnv::new();
    let spec = env.spec().clone();
    let mut r = rng::stream(0);
    let mut buf = ReplayBuffer::new(4000, spec.state_dim, spec.action_dim)?;
    let mut s = env.reset(0);
    for t in 1..=4000u64 {
        let a = vec![r.random_range(spec.action_low[0]..spec.action_high[0])];
        let out = env.step(&a)?;
        buf.push(Transition {
            s,
            a,
            r: out.reward,
            s_next: out.next_state.clone(),
            done: out.done,
        })?;
        s = if out.done { env.reset(t) } else { out.next_state };
    }

    let cfg = WorldModelConfig {
        ensemble_size: 4,
        ..WorldModelConfig::default()
    };
    let mut trained = GaussianEnsemble::new(spec.state_dim, spec.action_dim, &cfg, 1)?;
    trained.train(&buf, 1500, 256, &mut rng::stream(2))?;
    let agent = SacAgent::new(&spec, &SacConfig::default(), 3)?;
    let probe = buf.sample(1024, &mut rng::stream(4))?;
    let base = mmse_on_batch(&trained, &probe, &mut rng::stream(5))?;
    println!("trained model: mmse {base:.5}");

    let variants = [
        ("hard, last 2 hidden, all members", LayerScope::LastK { k: 2 }, MemberScope::All, ResetMode::Hard),
        ("hard, all layers", LayerScope::AllLayers, MemberScope::All, ResetMode::Hard),
        ("hard, first hidden layer", LayerScope::FirstK { k: 1 }, MemberScope::All, ResetMode::Hard),
        ("hard, last 2 + head", LayerScope::LastKWithHead { k: 2 }, MemberScope::All, ResetMode::Hard),
        ("hard, 2 random layers", LayerScope::RandomK { k: 2, seed: 7 }, MemberScope::All, ResetMode::Hard),
        ("hard, first 2 members", LayerScope::LastK { k: 2 }, MemberScope::First { m: 2 }, ResetMode::Hard),
        ("hard, 1 random member", LayerScope::LastK { k: 2 }, MemberScope::Random { m: 1, seed: 7 }, ResetMode::Hard),
        ("ema 0.8, last 2", LayerScope::LastK { k: 2 }, MemberScope::All, ResetMode::Ema { alpha: 0.8 }),
        ("ema 0.2, last 2", LayerScope::LastK { k: 2 }, MemberScope::All, ResetMode::Ema { alpha: 0.2 }),
    ];
    for (name, layer_scope, member_scope, mode) in variants {
        let mut model = trained.clone();
        let mut a = agent.clone();
        let policy = ResetPolicy {
            target: ResetTarget::WorldModel,
            layer_scope,
            member_scope,
            mode,
            ..ResetPolicy::default()
        };
        let report = apply_reset(&policy, &mut model, &mut a, 20_000, 9)?;
        let after = mmse_on_batch(&model, &probe, &mut rng::stream(5))?;
        println!(
            "{name:<34} tensors {:>2}  |dphi| {:>7.3}  mmse {after:.5}",
            report.addresses_changed.len(),
            report.change_norm
        );
    }
    Ok(())
}
