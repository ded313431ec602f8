use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::normalizer::Normalizer;
use crate::codec::{read_file, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use crate::nn::{adam_step, adam_update, AdamConfig, Gradients, Mlp, MlpSpec, ParamEntry};
use crate::replay::ReplayBuffer;
use crate::rng::{self, RngStream};

const MAGIC: &[u8; 5] = b"PMDL1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldModelConfig {
    pub ensemble_size: usize,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub init_max_logvar: f64,
    pub init_min_logvar: f64,
    /// Weight of `Σ max_logvar - Σ min_logvar` in the loss.
    pub bound_reg: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 7,
            hidden: vec![64; 4],
            adam: AdamConfig::default(),
            init_max_logvar: 0.5,
            init_min_logvar: -10.0,
            bound_reg: 0.01,
        }
    }
}

impl WorldModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::config("ensemble_size must be at least 1"));
        }
        if !(self.init_min_logvar < self.init_max_logvar) {
            return Err(Error::config("init_min_logvar must be below init_max_logvar"));
        }
        self.adam.validate()
    }
}

/// Something that can sample `(s', r)` from one of several members.
///
/// Implemented by [`GaussianEnsemble`] and by exact-dynamics oracles in tests.
pub trait DynamicsModel {
    fn num_members(&self) -> usize;

    /// One sampled successor per row from member `member`.
    fn sample_member(
        &self,
        member: usize,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        rng: &mut RngStream,
    ) -> Result<(Array2<f64>, Array1<f64>)>;

    /// Picks a member uniformly per row, then samples from it.
    fn predict_batch(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        rng: &mut RngStream,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let n = states.nrows();
        let m = self.num_members();
        let choice: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let mut next = Array2::zeros((n, states.ncols()));
        let mut rewards = Array1::zeros(n);
        for member in 0..m {
            let rows: Vec<usize> = (0..n).filter(|&i| choice[i] == member).collect();
            if rows.is_empty() {
                continue;
            }
            let s = states.select(Axis(0), &rows);
            let a = actions.select(Axis(0), &rows);
            let (ns, r) = self.sample_member(member, s.view(), a.view(), rng)?;
            for (k, &i) in rows.iter().enumerate() {
                next.row_mut(i).assign(&ns.row(k));
                rewards[i] = r[k];
            }
        }
        Ok((next, rewards))
    }
}

/// One Gaussian member: an MLP emitting `(mean, raw logvar)` over
/// `(Δs, r)` plus learnable soft log-variance bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub net: Mlp,
    pub max_logvar: ParamEntry,
    pub min_logvar: ParamEntry,
}

/// Gradients of the member loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberGrads {
    pub net: Gradients,
    pub max_logvar: Array2<f64>,
    pub min_logvar: Array2<f64>,
}

impl Member {
    pub fn output_dim(&self) -> usize {
        self.max_logvar.value.ncols()
    }

    /// Bounded log-variance: `max - softplus(max - raw)`, then
    /// `min + softplus(· - min)`.
    fn bound_logvar(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let max = self.max_logvar.value.row(0);
        let min = self.min_logvar.value.row(0);
        let mut out = raw.to_owned();
        for mut row in out.rows_mut() {
            Zip::from(&mut row).and(&max).and(&min).for_each(|x, &hi, &lo| {
                let upper = hi - softplus(hi - *x);
                *x = lo + softplus(upper - lo);
            });
        }
        out
    }

    /// Mean and bounded log-variance for already-normalized inputs.
    pub fn distribution(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let d = self.output_dim();
        let out = self.net.predict(x)?;
        let mean = out.slice(s![.., ..d]).to_owned();
        let logvar = self.bound_logvar(out.slice(s![.., d..]));
        Ok((mean, logvar))
    }
}

/// Mean over rows of `Σ_d (μ - y)² e^{-logvar} + logvar`.
pub fn gaussian_nll(mean: ArrayView2<f64>, logvar: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    Zip::from(&mean).and(&logvar).and(&target).for_each(|&m, &lv, &y| {
        total += (m - y).powi(2) * (-lv).exp() + lv;
    });
    total / mean.nrows().max(1) as f64
}

/// Member loss (NLL plus bound regularizer) on normalized inputs.
pub fn nll_loss(member: &Member, inputs: ArrayView2<f64>, targets: ArrayView2<f64>, bound_reg: f64) -> Result<f64> {
    let (mean, logvar) = member.distribution(inputs)?;
    if targets.dim() != mean.dim() {
        return Err(Error::config("target shape does not match model output"));
    }
    Ok(gaussian_nll(mean.view(), logvar.view(), targets) + bound_reg * bound_penalty(member))
}

fn bound_penalty(member: &Member) -> f64 {
    member.max_logvar.value.sum() - member.min_logvar.value.sum()
}

/// Member loss and its gradient with respect to every member parameter.
pub fn nll_loss_and_grad(
    member: &Member,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    bound_reg: f64,
) -> Result<(f64, MemberGrads)> {
    let d = member.output_dim();
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptySource("empty model-training batch".into()));
    }
    if targets.dim() != (n, d) {
        return Err(Error::config("target shape does not match model output"));
    }
    let (out, tape) = member.net.forward(inputs)?;
    let max = member.max_logvar.value.row(0);
    let min = member.min_logvar.value.row(0);
    let inv_n = 1.0 / n as f64;

    let mut grad_out = Array2::zeros((n, 2 * d));
    let mut g_max = Array2::zeros((1, d));
    let mut g_min = Array2::zeros((1, d));
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..d {
            let mu = out[[i, j]];
            let raw = out[[i, d + j]];
            let (hi, lo) = (max[j], min[j]);
            let upper = hi - softplus(hi - raw);
            let lv = lo + softplus(upper - lo);
            let err = mu - targets[[i, j]];
            let inv_var = (-lv).exp();
            loss += err * err * inv_var + lv;

            let d_mu = 2.0 * err * inv_var * inv_n;
            let d_lv = (1.0 - err * err * inv_var) * inv_n;
            // lv = lo + softplus(upper - lo)
            let s_low = sigmoid(upper - lo);
            let d_upper = d_lv * s_low;
            g_min[[0, j]] += d_lv * (1.0 - s_low);
            // upper = hi - softplus(hi - raw)
            let s_high = sigmoid(hi - raw);
            grad_out[[i, j]] = d_mu;
            grad_out[[i, d + j]] = d_upper * s_high;
            g_max[[0, j]] += d_upper * (1.0 - s_high);
        }
    }
    loss = loss * inv_n + bound_reg * bound_penalty(member);
    g_max += bound_reg;
    g_min -= bound_reg;
    let (net, _) = member.net.backward(&tape, grad_out.view())?;
    Ok((
        loss,
        MemberGrads {
            net,
            max_logvar: g_max,
            min_logvar: g_min,
        },
    ))
}

/// Per-member loss trajectories from one training event.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub member_losses: Vec<Vec<f64>>,
}

impl TrainStats {
    /// Mean over members of each member's final loss.
    pub fn final_loss(&self) -> Option<f64> {
        let last: Vec<f64> = self.member_losses.iter().filter_map(|l| l.last().copied()).collect();
        if last.is_empty() {
            None
        } else {
            Some(last.iter().sum::<f64>() / last.len() as f64)
        }
    }
}

/// Probabilistic ensemble over `(Δs, r)` conditioned on normalized `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEnsemble {
    state_dim: usize,
    action_dim: usize,
    cfg: WorldModelConfig,
    pub members: Vec<Member>,
    pub normalizer: Normalizer,
}

impl GaussianEnsemble {
    /// Member `i` is initialized from `derive_seed(seed, [i])`.
    pub fn new(state_dim: usize, action_dim: usize, cfg: &WorldModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let members = (0..cfg.ensemble_size)
            .map(|i| Self::fresh_member(state_dim, action_dim, cfg, rng::derive_seed(seed, &[i as u64])))
            .collect::<Result<_>>()?;
        Ok(Self {
            state_dim,
            action_dim,
            cfg: cfg.clone(),
            members,
            normalizer: Normalizer::identity(state_dim + action_dim),
        })
    }

    pub fn member_spec(state_dim: usize, action_dim: usize, cfg: &WorldModelConfig) -> MlpSpec {
        MlpSpec::new(state_dim + action_dim, &cfg.hidden, 2 * (state_dim + 1))
    }

    fn fresh_member(state_dim: usize, action_dim: usize, cfg: &WorldModelConfig, seed: u64) -> Result<Member> {
        let d = state_dim + 1;
        Ok(Member {
            net: Mlp::init(&Self::member_spec(state_dim, action_dim, cfg), seed)?,
            max_logvar: ParamEntry::new(Array2::from_elem((1, d), cfg.init_max_logvar)),
            min_logvar: ParamEntry::new(Array2::from_elem((1, d), cfg.init_min_logvar)),
        })
    }

    pub fn config(&self) -> &WorldModelConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn inputs(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.state_dim || actions.ncols() != self.action_dim || states.nrows() != actions.nrows() {
            return Err(Error::config(format!(
                "model input dims ({}, {}) do not match ({}, {})",
                states.ncols(),
                actions.ncols(),
                self.state_dim,
                self.action_dim
            )));
        }
        let raw = ndarray::concatenate![Axis(1), states, actions];
        Ok(self.normalizer.transform(raw.view()))
    }

    /// Training targets `(s' - s, r)` for each row of a batch.
    pub fn targets(states: ArrayView2<f64>, next_states: ArrayView2<f64>, rewards: ndarray::ArrayView1<f64>) -> Array2<f64> {
        let delta = &next_states - &states;
        ndarray::concatenate![Axis(1), delta, rewards.insert_axis(Axis(1))]
    }

    /// Mean and log-variance of member `i` over `(Δs, r)`.
    pub fn member_distribution(
        &self,
        member: usize,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let m = self
            .members
            .get(member)
            .ok_or_else(|| Error::config(format!("member {member} out of range")))?;
        m.distribution(self.inputs(states, actions)?.view())
    }

    /// Samples one `(s', r)` from a uniformly chosen member.
    pub fn predict(&self, state: &[f64], action: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, f64)> {
        let s = ndarray::aview1(state).insert_axis(Axis(0));
        let a = ndarray::aview1(action).insert_axis(Axis(0));
        let (ns, r) = self.predict_batch(s, a, rng)?;
        Ok((ns.row(0).to_vec(), r[0]))
    }

    /// Refits the normalizer on `d_env`, then gives each member `steps`
    /// Adam updates on independently drawn batches.
    pub fn train(&mut self, d_env: &ReplayBuffer, steps: usize, batch_size: usize, rng: &mut RngStream) -> Result<TrainStats> {
        if steps == 0 {
            return Ok(TrainStats {
                member_losses: vec![Vec::new(); self.members.len()],
            });
        }
        if d_env.is_empty() {
            return Err(Error::EmptySource("model training on empty D_env".into()));
        }
        let data = d_env.to_batch();
        let raw_inputs = data.state_actions();
        self.normalizer.fit(raw_inputs.view());
        let inputs = self.normalizer.transform(raw_inputs.view());
        let targets = Self::targets(data.states.view(), data.next_states.view(), data.rewards.view());
        let n = inputs.nrows();
        let adam = self.cfg.adam;
        let reg = self.cfg.bound_reg;
        let mut member_losses = Vec::with_capacity(self.members.len());
        for (i, member) in self.members.iter_mut().enumerate() {
            let mut losses = Vec::with_capacity(steps);
            for _ in 0..steps {
                let idx: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n)).collect();
                let x = inputs.select(Axis(0), &idx);
                let y = targets.select(Axis(0), &idx);
                let (loss, grads) = nll_loss_and_grad(member, x.view(), y.view(), reg)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("nll loss of ensemble member {i}")));
                }
                adam_step(member.net.params_mut(), &grads.net, &adam)?;
                adam_update(&mut member.max_logvar, grads.max_logvar.view(), &adam)?;
                adam_update(&mut member.min_logvar, grads.min_logvar.view(), &adam)?;
                losses.push(loss);
            }
            member_losses.push(losses);
        }
        Ok(TrainStats { member_losses })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut enc = Encoder::new(MAGIC);
        enc.u64(self.state_dim as u64);
        enc.u64(self.action_dim as u64);
        enc.u64(self.members.len() as u64);
        let c = &self.cfg;
        enc.f64s([
            c.adam.learning_rate,
            c.adam.beta1,
            c.adam.beta2,
            c.adam.epsilon,
            c.init_max_logvar,
            c.init_min_logvar,
            c.bound_reg,
        ]);
        enc.u64(self.normalizer.count);
        enc.u64(self.normalizer.dim() as u64);
        enc.f64s(self.normalizer.mean.iter().copied());
        enc.f64s(self.normalizer.var.iter().copied());
        for m in &self.members {
            enc.mlp(&m.net);
            enc.entry(&m.max_logvar);
            enc.entry(&m.min_logvar);
        }
        enc.write_to(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_file(path.as_ref())?;
        let mut dec = Decoder::new(&bytes, MAGIC)?;
        let state_dim = dec.len(1 << 20)?;
        let action_dim = dec.len(1 << 20)?;
        let m = dec.len(1 << 16)?;
        let v = dec.f64s(7)?;
        let count = dec.u64()?;
        let dim = dec.len(1 << 20)?;
        if dim != state_dim + action_dim {
            return Err(dec.error("normalizer dim does not match model dims"));
        }
        let mean = Array1::from(dec.f64s(dim)?);
        let var = Array1::from(dec.f64s(dim)?);
        let mut members = Vec::with_capacity(m);
        for _ in 0..m {
            let at = dec.offset();
            let net = dec.mlp()?;
            let max_logvar = dec.entry()?;
            let min_logvar = dec.entry()?;
            if net.input_dim() != dim
                || net.output_dim() != 2 * (state_dim + 1)
                || max_logvar.value.dim() != (1, state_dim + 1)
                || min_logvar.value.dim() != (1, state_dim + 1)
            {
                return Err(Error::Parse {
                    offset: at,
                    message: "member shapes do not match model dims".into(),
                });
            }
            members.push(Member {
                net,
                max_logvar,
                min_logvar,
            });
        }
        dec.finish()?;
        let hidden = members.first().map(|m| m.net.spec().hidden.clone()).unwrap_or_default();
        let cfg = WorldModelConfig {
            ensemble_size: m,
            hidden,
            adam: AdamConfig {
                learning_rate: v[0],
                beta1: v[1],
                beta2: v[2],
                epsilon: v[3],
            },
            init_max_logvar: v[4],
            init_min_logvar: v[5],
            bound_reg: v[6],
        };
        Ok(Self {
            state_dim,
            action_dim,
            cfg,
            members,
            normalizer: Normalizer { count, mean, var },
        })
    }
}

impl DynamicsModel for GaussianEnsemble {
    fn num_members(&self) -> usize {
        self.members.len()
    }

    fn sample_member(
        &self,
        member: usize,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        rng: &mut RngStream,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let (mean, logvar) = self.member_distribution(member, states, actions)?;
        let mut sample = mean;
        Zip::from(&mut sample).and(&logvar).for_each(|x, &lv| {
            let z: f64 = rng.sample(StandardNormal);
            *x += (0.5 * lv).exp() * z;
        });
        let d = self.state_dim;
        let next = &states + &sample.slice(s![.., ..d]);
        let rewards = sample.column(d).to_owned();
        Ok((next, rewards))
    }
}
