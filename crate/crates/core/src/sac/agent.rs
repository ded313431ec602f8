use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::losses::{
    actor_loss_and_grad, critic_loss_and_grad, split_policy_output, squash, temperature_grad,
    temperature_loss, ActorBatch,
};
use super::{ActMode, Policy};
use crate::codec::{read_file, Decoder, Encoder};
use crate::envs::{rollout_return, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::nn::{adam_step, adam_update, AdamConfig, Mlp, MlpSpec, ParamEntry};
use crate::replay::{Batch, MixedSampler, ReplayBuffer};
use crate::rng::{self, RngStream};

const MAGIC: &[u8; 5] = b"PAGT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    pub alpha_adam: AdamConfig,
    pub init_log_alpha: f64,
    pub learn_alpha: bool,
    /// Defaults to `-action_dim` when unset.
    pub target_entropy: Option<f64>,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Treat `done` as terminal in the TD target. Both bundled environments
    /// only signal time limits, so this is off by default.
    pub terminal_on_done: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 0.005,
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
            alpha_adam: AdamConfig::default(),
            init_log_alpha: 0.0,
            learn_alpha: true,
            target_entropy: None,
            log_std_min: -20.0,
            log_std_max: 2.0,
            terminal_on_done: false,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau must lie in [0, 1]"));
        }
        if !(self.log_std_min < self.log_std_max) {
            return Err(Error::config("log_std_min must be below log_std_max"));
        }
        self.actor_adam.validate()?;
        self.critic_adam.validate()?;
        self.alpha_adam.validate()
    }
}

/// Mean losses over the iterations of one [`SacAgent::update`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub iterations: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SacAgent {
    state_dim: usize,
    action_dim: usize,
    center: Array1<f64>,
    scale: Array1<f64>,
    cfg: SacConfig,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub target_critics: [Mlp; 2],
    pub log_alpha: ParamEntry,
}

impl SacAgent {
    pub fn new(env: &EnvSpec, cfg: &SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        let (center, scale) = env.action_center_and_scale();
        let s = env.state_dim;
        let a = env.action_dim;
        let actor = Mlp::init(&Self::actor_spec(s, a, cfg), rng::derive_seed(seed, &[0]))?;
        let c1 = Mlp::init(&Self::critic_spec(s, a, cfg), rng::derive_seed(seed, &[1]))?;
        let c2 = Mlp::init(&Self::critic_spec(s, a, cfg), rng::derive_seed(seed, &[2]))?;
        Ok(Self {
            state_dim: s,
            action_dim: a,
            center: Array1::from(center),
            scale: Array1::from(scale),
            cfg: cfg.clone(),
            actor,
            target_critics: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            log_alpha: ParamEntry::new(Array2::from_elem((1, 1), cfg.init_log_alpha)),
        })
    }

    pub fn actor_spec(state_dim: usize, action_dim: usize, cfg: &SacConfig) -> MlpSpec {
        MlpSpec::new(state_dim, &cfg.hidden, 2 * action_dim)
    }

    pub fn critic_spec(state_dim: usize, action_dim: usize, cfg: &SacConfig) -> MlpSpec {
        MlpSpec::new(state_dim + action_dim, &cfg.hidden, 1)
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value[[0, 0]].exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.cfg.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    fn to_env_action(&self, unit: &Array2<f64>) -> Array2<f64> {
        unit * &self.scale + &self.center
    }

    fn to_unit_action(&self, env: ArrayView2<f64>) -> Array2<f64> {
        ((&env - &self.center) / &self.scale).mapv(|x| x.clamp(-1.0, 1.0))
    }

    fn noise(&self, rows: usize, rng: &mut RngStream) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.action_dim), || StandardNormal.sample(rng))
    }

    /// Squashed policy sample in the unit box together with its log-prob.
    fn sample_unit(&self, states: ArrayView2<f64>, rng: &mut RngStream) -> Result<(Array2<f64>, Array1<f64>)> {
        let out = self.actor.predict(states)?;
        let (mean, log_std, _) = split_policy_output(out.view(), self.cfg.log_std_min, self.cfg.log_std_max);
        let noise = self.noise(states.nrows(), rng);
        let s = squash(mean.view(), log_std.view(), noise.view());
        Ok((s.action, s.log_prob))
    }

    fn deterministic_unit(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        let out = self.actor.predict(states)?;
        let (mean, _, _) = split_policy_output(out.view(), self.cfg.log_std_min, self.cfg.log_std_max);
        Ok(mean.mapv(f64::tanh))
    }

    /// Critic input `(s, a)` with `a` in the unit box.
    fn critic_input(states: ArrayView2<f64>, unit_actions: ArrayView2<f64>) -> Array2<f64> {
        ndarray::concatenate![Axis(1), states, unit_actions]
    }

    /// `min(Q1, Q2)` at `(x, π_det(x))`.
    pub fn state_value(&self, states: ArrayView2<f64>) -> Result<Array1<f64>> {
        let a = self.deterministic_unit(states)?;
        let x = Self::critic_input(states, a.view());
        let q1 = self.critics[0].predict(x.view())?;
        let q2 = self.critics[1].predict(x.view())?;
        Ok(Zip::from(q1.column(0)).and(q2.column(0)).map_collect(|&a, &b| a.min(b)))
    }

    /// Twin critic values at environment-scale actions.
    pub fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let x = Self::critic_input(states, self.to_unit_action(actions).view());
        let q1 = self.critics[0].predict(x.view())?;
        let q2 = self.critics[1].predict(x.view())?;
        Ok((q1.column(0).to_owned(), q2.column(0).to_owned()))
    }

    pub fn act(&self, state: &[f64], mode: ActMode, rng: &mut RngStream) -> Result<Vec<f64>> {
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("agent input state".into()));
        }
        let s = ndarray::aview1(state).insert_axis(Axis(0));
        Ok(self.act_batch(s, mode, rng)?.row(0).to_vec())
    }

    /// Runs `n_updates` SAC iterations on batches drawn by `sampler`.
    pub fn update(
        &mut self,
        sampler: &MixedSampler,
        d_env: &ReplayBuffer,
        d_model: &ReplayBuffer,
        n_updates: usize,
        batch_size: usize,
        rng: &mut RngStream,
    ) -> Result<UpdateStats> {
        let mut acc = UpdateStats::default();
        for _ in 0..n_updates {
            let batch = sampler.sample(d_env, d_model, batch_size, rng)?;
            let s = self.update_on_batch(&batch, rng)?;
            acc.critic_loss += s.critic_loss;
            acc.actor_loss += s.actor_loss;
            acc.alpha_loss += s.alpha_loss;
            acc.entropy += s.entropy;
            acc.iterations += 1;
        }
        if acc.iterations > 0 {
            let k = acc.iterations as f64;
            acc.critic_loss /= k;
            acc.actor_loss /= k;
            acc.alpha_loss /= k;
            acc.entropy /= k;
        }
        acc.alpha = self.alpha();
        Ok(acc)
    }

    /// One iteration: critic step, actor step, temperature step, Polyak.
    pub fn update_on_batch(&mut self, batch: &Batch, rng: &mut RngStream) -> Result<UpdateStats> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::EmptySource("empty agent batch".into()));
        }
        let alpha = self.alpha();

        // Entropy-regularized TD target from the target critics.
        let (next_a, next_logp) = self.sample_unit(batch.next_states.view(), rng)?;
        let xn = Self::critic_input(batch.next_states.view(), next_a.view());
        let t1 = self.target_critics[0].predict(xn.view())?;
        let t2 = self.target_critics[1].predict(xn.view())?;
        let mut targets = Array1::zeros(n);
        for i in 0..n {
            let cont = if self.cfg.terminal_on_done { 1.0 - batch.dones[i] } else { 1.0 };
            let soft_v = t1[[i, 0]].min(t2[[i, 0]]) - alpha * next_logp[i];
            targets[i] = batch.rewards[i] + self.cfg.gamma * cont * soft_v;
        }
        let x = Self::critic_input(batch.states.view(), self.to_unit_action(batch.actions.view()).view());
        let mut critic_loss = 0.0;
        for critic in self.critics.iter_mut() {
            let (loss, grads) = critic_loss_and_grad(critic, x.view(), targets.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("critic loss".into()));
            }
            adam_step(critic.params_mut(), &grads, &self.cfg.critic_adam)?;
            critic_loss += loss;
        }

        let noise = self.noise(n, rng);
        let actor_out = actor_loss_and_grad(
            &self.actor,
            [&self.critics[0], &self.critics[1]],
            &ActorBatch {
                states: batch.states.view(),
                noise: noise.view(),
                alpha,
                log_std_min: self.cfg.log_std_min,
                log_std_max: self.cfg.log_std_max,
            },
        )?;
        if !actor_out.loss.is_finite() {
            return Err(Error::NonFinite("actor loss".into()));
        }
        adam_step(self.actor.params_mut(), &actor_out.grads, &self.cfg.actor_adam)?;

        let target_entropy = self.target_entropy();
        let log_alpha = self.log_alpha.value[[0, 0]];
        let alpha_loss = temperature_loss(log_alpha, actor_out.log_prob.view(), target_entropy);
        if !alpha_loss.is_finite() {
            return Err(Error::NonFinite("temperature loss".into()));
        }
        if self.cfg.learn_alpha {
            let g = temperature_grad(actor_out.log_prob.view(), target_entropy);
            adam_update(&mut self.log_alpha, Array2::from_elem((1, 1), g).view(), &self.cfg.alpha_adam)?;
        }

        self.polyak_update();
        Ok(UpdateStats {
            iterations: 1,
            critic_loss,
            actor_loss: actor_out.loss,
            alpha_loss,
            alpha: self.alpha(),
            entropy: -actor_out.log_prob.mean().unwrap_or(0.0),
        })
    }

    /// `θ' ← (1 - τ) θ' + τ θ` for both target critics.
    pub fn polyak_update(&mut self) {
        let tau = self.cfg.tau;
        for (target, online) in self.target_critics.iter_mut().zip(&self.critics) {
            for ((_, t), (_, o)) in target.params_mut().iter_mut().zip(online.params().iter()) {
                Zip::from(&mut t.value)
                    .and(&o.value)
                    .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
            }
        }
    }

    /// Mean undiscounted return of deterministic-mode episodes; episode `i`
    /// starts from `reset(seed + i)`.
    pub fn evaluate(&self, env: &mut dyn Environment, n_episodes: usize, seed: u64) -> Result<f64> {
        let mut unused = rng::stream(seed);
        rollout_return(env, n_episodes, seed, |s| self.act(s, ActMode::Deterministic, &mut unused))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut enc = Encoder::new(MAGIC);
        let cfg = serde_json::to_vec(&self.cfg).expect("config serializes");
        enc.bytes(&cfg);
        enc.u64(self.state_dim as u64);
        enc.u64(self.action_dim as u64);
        enc.f64s(self.center.iter().copied());
        enc.f64s(self.scale.iter().copied());
        enc.mlp(&self.actor);
        for net in self.critics.iter().chain(&self.target_critics) {
            enc.mlp(net);
        }
        enc.entry(&self.log_alpha);
        enc.write_to(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_file(path.as_ref())?;
        let mut dec = Decoder::new(&bytes, MAGIC)?;
        let at = dec.offset();
        let cfg: SacConfig = serde_json::from_slice(&dec.bytes()?).map_err(|e| Error::Parse {
            offset: at,
            message: format!("agent config: {e}"),
        })?;
        let state_dim = dec.len(1 << 20)?;
        let action_dim = dec.len(1 << 20)?;
        let center = Array1::from(dec.f64s(action_dim)?);
        let scale = Array1::from(dec.f64s(action_dim)?);
        let at = dec.offset();
        let actor = dec.mlp()?;
        let c1 = dec.mlp()?;
        let c2 = dec.mlp()?;
        let t1 = dec.mlp()?;
        let t2 = dec.mlp()?;
        let log_alpha = dec.entry()?;
        dec.finish()?;
        if actor.spec() != &Self::actor_spec(state_dim, action_dim, &cfg)
            || [&c1, &c2, &t1, &t2]
                .iter()
                .any(|c| c.spec() != &Self::critic_spec(state_dim, action_dim, &cfg))
            || log_alpha.value.dim() != (1, 1)
        {
            return Err(Error::Parse {
                offset: at,
                message: "network shapes do not match agent dims".into(),
            });
        }
        Ok(Self {
            state_dim,
            action_dim,
            center,
            scale,
            cfg,
            actor,
            critics: [c1, c2],
            target_critics: [t1, t2],
            log_alpha,
        })
    }
}

impl Policy for SacAgent {
    fn act_batch(&self, states: ArrayView2<f64>, mode: ActMode, rng: &mut RngStream) -> Result<Array2<f64>> {
        let unit = match mode {
            ActMode::Deterministic => self.deterministic_unit(states)?,
            ActMode::Stochastic => self.sample_unit(states, rng)?.0,
        };
        Ok(self.to_env_action(&unit))
    }
}
