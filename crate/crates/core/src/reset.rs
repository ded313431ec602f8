//! Scheduled, scoped parameter resets for the world model or the agent.
//!
//! A reset replaces (hard) or interpolates toward (EMA) a fresh
//! initialization for a chosen subset of layers and ensemble members:
//!
//! `φ ← (1 - α) φ + α φ_random`
//!
//! where `φ_random` is drawn by [`Mlp::init`] from a seed derived from the
//! run seed, the step and the network id. Hard resets copy `φ_random`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, ParamAddr};
use crate::rng;
use crate::sac::SacAgent;
use crate::world_model::GaussianEnsemble;

const RESET_TAG: u64 = 0x5245_5345_54;
/// Network ids of the agent's networks in the fresh-draw seed path.
pub const ACTOR_ID: u64 = 1 << 32;
pub const CRITIC_IDS: [u64; 2] = [(1 << 32) + 1, (1 << 32) + 2];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetTarget {
    #[default]
    None,
    WorldModel,
    Agent,
}

/// Which affine layers of each network are reset. Hidden layers are all
/// layers except the output head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerScope {
    AllLayers,
    LastK { k: usize },
    FirstK { k: usize },
    RandomK { k: usize, seed: u64 },
    LastKWithHead { k: usize },
}

/// Which ensemble members are reset (world-model target only).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberScope {
    #[default]
    All,
    First { m: usize },
    Random { m: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResetMode {
    #[default]
    Hard,
    Ema { alpha: f64 },
}

impl ResetMode {
    pub fn alpha(self) -> f64 {
        match self {
            ResetMode::Hard => 1.0,
            ResetMode::Ema { alpha } => alpha,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ResetMode::Hard => "hard",
            ResetMode::Ema { .. } => "ema",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResetPolicy {
    pub target: ResetTarget,
    pub interval: u64,
    pub layer_scope: LayerScope,
    pub member_scope: MemberScope,
    pub mode: ResetMode,
    pub reset_optimizer_state: bool,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        Self {
            target: ResetTarget::None,
            interval: 20_000,
            layer_scope: LayerScope::LastK { k: 2 },
            member_scope: MemberScope::All,
            mode: ResetMode::Hard,
            reset_optimizer_state: true,
        }
    }
}

impl ResetPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::config("reset interval must be at least 1"));
        }
        if let ResetMode::Ema { alpha } = self.mode {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::config(format!("ema alpha {alpha} must lie in (0, 1]")));
            }
        }
        match self.layer_scope {
            LayerScope::LastK { k }
            | LayerScope::FirstK { k }
            | LayerScope::RandomK { k, .. }
            | LayerScope::LastKWithHead { k }
                if k == 0 =>
            {
                return Err(Error::config("layer scope selects no layers"));
            }
            _ => {}
        }
        match self.member_scope {
            MemberScope::First { m } | MemberScope::Random { m, .. } if m == 0 => {
                Err(Error::config("member scope selects no members"))
            }
            _ => Ok(()),
        }
    }
}

/// True iff a reset is due after environment step `step`.
pub fn schedule_check(policy: &ResetPolicy, step: u64) -> bool {
    policy.target != ResetTarget::None && step >= 1 && policy.interval > 0 && step.is_multiple_of(policy.interval)
}

/// Layer indices of an `n_layers`-layer network selected by `scope`, sorted.
pub fn resolve_layers(scope: LayerScope, n_layers: usize) -> Result<Vec<usize>> {
    let hidden = n_layers.saturating_sub(1);
    let need = |k: usize| {
        if k == 0 || k > hidden {
            Err(Error::config(format!(
                "layer scope asks for {k} hidden layers but the network has {hidden}"
            )))
        } else {
            Ok(())
        }
    };
    match scope {
        LayerScope::AllLayers => Ok((0..n_layers).collect()),
        LayerScope::LastK { k } => {
            need(k)?;
            Ok((hidden - k..hidden).collect())
        }
        LayerScope::FirstK { k } => {
            need(k)?;
            Ok((0..k).collect())
        }
        LayerScope::RandomK { k, seed } => {
            need(k)?;
            let mut all: Vec<usize> = (0..hidden).collect();
            all.shuffle(&mut rng::stream(seed));
            let mut pick = all[..k].to_vec();
            pick.sort_unstable();
            Ok(pick)
        }
        LayerScope::LastKWithHead { k } => {
            need(k)?;
            Ok((hidden - k..n_layers).collect())
        }
    }
}

/// Member indices selected by `scope` out of `m_total`, sorted.
pub fn resolve_members(scope: MemberScope, m_total: usize) -> Result<Vec<usize>> {
    let check = |m: usize| {
        if m == 0 || m > m_total {
            Err(Error::config(format!("member scope asks for {m} of {m_total} members")))
        } else {
            Ok(())
        }
    };
    match scope {
        MemberScope::All => {
            check(m_total)?;
            Ok((0..m_total).collect())
        }
        MemberScope::First { m } => {
            check(m)?;
            Ok((0..m).collect())
        }
        MemberScope::Random { m, seed } => {
            check(m)?;
            let mut all: Vec<usize> = (0..m_total).collect();
            all.shuffle(&mut rng::stream(seed));
            let mut pick = all[..m].to_vec();
            pick.sort_unstable();
            Ok(pick)
        }
    }
}

/// Seed of the fresh initialization drawn for network `net_id` by the reset
/// at `step`. Ensemble members use their index as id.
pub fn fresh_draw_seed(run_seed: u64, step: u64, net_id: u64) -> u64 {
    rng::derive_seed(run_seed, &[RESET_TAG, step, net_id])
}

/// Resets `layers` of `net` toward `fresh` and returns the touched addresses
/// with the squared norm of the parameter change.
pub fn reset_layers(
    net: &mut Mlp,
    fresh: &Mlp,
    layers: &[usize],
    mode: ResetMode,
    reset_optimizer_state: bool,
) -> Result<(Vec<ParamAddr>, f64)> {
    if layers.is_empty() {
        return Err(Error::config("reset scope is empty"));
    }
    if net.spec() != fresh.spec() {
        return Err(Error::config("fresh draw does not match network spec"));
    }
    let alpha = mode.alpha();
    let mut touched = Vec::with_capacity(2 * layers.len());
    let mut change = 0.0;
    for &layer in layers {
        for addr in [ParamAddr::weight(layer), ParamAddr::bias(layer)] {
            let src = fresh
                .params()
                .get(addr)
                .ok_or_else(|| Error::config(format!("no parameter {addr}")))?;
            let dst = net.params_mut().get_mut(addr).expect("specs match");
            ndarray::Zip::from(&mut dst.value).and(&src.value).for_each(|p, &r| {
                let new = match mode {
                    ResetMode::Hard => r,
                    ResetMode::Ema { .. } => (1.0 - alpha) * *p + alpha * r,
                };
                change += (new - *p).powi(2);
                *p = new;
            });
            if reset_optimizer_state {
                dst.clear_moments();
            }
            touched.push(addr);
        }
    }
    Ok((touched, change))
}

/// Summary of one reset event, written to the run's event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetReport {
    pub step: u64,
    pub target: ResetTarget,
    pub addresses_changed: Vec<String>,
    pub mode: String,
    pub alpha: f64,
    /// L2 norm of the total parameter change.
    pub change_norm: f64,
}

/// Applies `policy` at `step`. The caller checks the schedule.
pub fn apply_reset(
    policy: &ResetPolicy,
    model: &mut GaussianEnsemble,
    agent: &mut SacAgent,
    step: u64,
    run_seed: u64,
) -> Result<ResetReport> {
    policy.validate()?;
    let mut addresses = Vec::new();
    let mut change = 0.0;
    match policy.target {
        ResetTarget::None => return Err(Error::config("reset target is none")),
        ResetTarget::WorldModel => {
            let members = resolve_members(policy.member_scope, model.len())?;
            let spec = model.members[0].net.spec().clone();
            for i in members {
                let net = &mut model.members[i].net;
                let layers = resolve_layers(policy.layer_scope, net.num_layers())?;
                let fresh = Mlp::init(&spec, fresh_draw_seed(run_seed, step, i as u64))?;
                let (touched, c) = reset_layers(net, &fresh, &layers, policy.mode, policy.reset_optimizer_state)?;
                change += c;
                addresses.extend(touched.iter().map(|a| format!("member{i}/{a}")));
            }
        }
        ResetTarget::Agent => {
            let layers = resolve_layers(policy.layer_scope, agent.actor.num_layers())?;
            let fresh = Mlp::init(agent.actor.spec(), fresh_draw_seed(run_seed, step, ACTOR_ID))?;
            let (touched, c) =
                reset_layers(&mut agent.actor, &fresh, &layers, policy.mode, policy.reset_optimizer_state)?;
            change += c;
            addresses.extend(touched.iter().map(|a| format!("actor/{a}")));
            for k in 0..2 {
                let fresh = Mlp::init(agent.critics[k].spec(), fresh_draw_seed(run_seed, step, CRITIC_IDS[k]))?;
                let (touched, c) = reset_layers(
                    &mut agent.critics[k],
                    &fresh,
                    &layers,
                    policy.mode,
                    policy.reset_optimizer_state,
                )?;
                change += c;
                // Targets restart from the reset critic so the TD target is consistent.
                for &addr in &touched {
                    let v = agent.critics[k].params().get(addr).expect("in scope").value.clone();
                    agent.target_critics[k].params_mut().get_mut(addr).expect("same spec").value = v;
                }
                addresses.extend(touched.iter().map(|a| format!("critic{k}/{a}")));
            }
        }
    }
    Ok(ResetReport {
        step,
        target: policy.target,
        addresses_changed: addresses,
        mode: policy.mode.name().into(),
        alpha: policy.mode.alpha(),
        change_norm: change.sqrt(),
    })
}
