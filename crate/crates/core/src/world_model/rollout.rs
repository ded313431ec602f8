use ndarray::Axis;

use super::ensemble::DynamicsModel;
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::RngStream;
use crate::sac::{ActMode, Policy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RolloutStats {
    pub added: usize,
    /// Branches dropped because the model produced a non-finite state.
    pub truncated: usize,
}

/// Branches `k`-step model rollouts from `n_starts` states drawn uniformly
/// from `d_env`, pushing every synthetic transition (with `done = false`)
/// into `d_model`.
pub fn rollout(
    model: &dyn DynamicsModel,
    policy: &dyn Policy,
    d_env: &ReplayBuffer,
    d_model: &mut ReplayBuffer,
    n_starts: usize,
    k: usize,
    rng: &mut RngStream,
) -> Result<RolloutStats> {
    if k == 0 {
        return Err(Error::config("rollout length must be at least 1"));
    }
    let mut stats = RolloutStats::default();
    let mut states = d_env.sample_states(n_starts, rng)?;
    for _ in 0..k {
        if states.nrows() == 0 {
            break;
        }
        let actions = policy.act_batch(states.view(), ActMode::Stochastic, rng)?;
        let (next, rewards) = model.predict_batch(states.view(), actions.view(), rng)?;
        let mut alive = Vec::with_capacity(states.nrows());
        for i in 0..states.nrows() {
            let t = Transition {
                s: states.row(i).to_vec(),
                a: actions.row(i).to_vec(),
                r: rewards[i],
                s_next: next.row(i).to_vec(),
                done: false,
            };
            if !t.is_finite() {
                stats.truncated += 1;
                continue;
            }
            d_model.push(t)?;
            stats.added += 1;
            alive.push(i);
        }
        states = next.select(Axis(0), &alive);
    }
    Ok(stats)
}
