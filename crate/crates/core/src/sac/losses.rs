//! SAC loss functions with analytic gradients.
//!
//! Each loss is exposed both as a value-only function and as a
//! value-plus-gradient function so the gradients can be checked against
//! finite differences.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Mlp};
use crate::math::softplus;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Reparameterized squashed-Gaussian sample in the unit action box.
#[derive(Clone, Debug)]
pub struct SquashedSample {
    pub pre_tanh: Array2<f64>,
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
}

/// Splits actor output into mean and clamped log-std. The returned mask is
/// 1 where the raw log-std lies strictly inside the bounds.
pub fn split_policy_output(out: ArrayView2<f64>, log_std_min: f64, log_std_max: f64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let a = out.ncols() / 2;
    let mean = out.slice(s![.., ..a]).to_owned();
    let raw = out.slice(s![.., a..]);
    let log_std = raw.mapv(|x| x.clamp(log_std_min, log_std_max));
    let mask = raw.mapv(|x| if x > log_std_min && x < log_std_max { 1.0 } else { 0.0 });
    (mean, log_std, mask)
}

/// `u = μ + e^{ls} ε`, `a = tanh(u)` and
/// `log π(a) = Σ [-ε²/2 - ls - ln√(2π) - 2(ln 2 - u - softplus(-2u))]`.
pub fn squash(mean: ArrayView2<f64>, log_std: ArrayView2<f64>, noise: ArrayView2<f64>) -> SquashedSample {
    let pre_tanh = &mean + &(log_std.mapv(f64::exp) * noise);
    let action = pre_tanh.mapv(f64::tanh);
    let mut log_prob = Array1::zeros(mean.nrows());
    for i in 0..mean.nrows() {
        let mut lp = 0.0;
        for j in 0..mean.ncols() {
            let u = pre_tanh[[i, j]];
            let e = noise[[i, j]];
            lp += -0.5 * e * e - log_std[[i, j]] - HALF_LN_2PI
                - 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u));
        }
        log_prob[i] = lp;
    }
    SquashedSample {
        pre_tanh,
        action,
        log_prob,
    }
}

/// `mean((Q(s, a) - y)²)` for one critic.
pub fn critic_loss(critic: &Mlp, inputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> Result<f64> {
    let q = critic.predict(inputs)?;
    Ok(q.column(0).iter().zip(targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / targets.len() as f64)
}

pub fn critic_loss_and_grad(critic: &Mlp, inputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> Result<(f64, Gradients)> {
    let n = targets.len();
    if n == 0 || inputs.nrows() != n {
        return Err(Error::config("critic batch and target lengths differ"));
    }
    let (q, tape) = critic.forward(inputs)?;
    let mut grad = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let e = q[[i, 0]] - targets[i];
        loss += e * e;
        grad[[i, 0]] = 2.0 * e / n as f64;
    }
    let (g, _) = critic.backward(&tape, grad.view())?;
    Ok((loss / n as f64, g))
}

/// Inputs to the actor loss that are held fixed while differentiating.
pub struct ActorBatch<'a> {
    pub states: ArrayView2<'a, f64>,
    pub noise: ArrayView2<'a, f64>,
    pub alpha: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

#[derive(Clone, Debug)]
pub struct ActorLossOutput {
    pub loss: f64,
    pub grads: Gradients,
    pub log_prob: Array1<f64>,
}

fn critic_inputs(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate![Axis(1), states, actions]
}

/// `mean(α log π(ã|s) - min(Q1, Q2)(s, ã))` with `ã` reparameterized.
pub fn actor_loss(actor: &Mlp, critics: [&Mlp; 2], batch: &ActorBatch<'_>) -> Result<f64> {
    let out = actor.predict(batch.states)?;
    let (mean, log_std, _) = split_policy_output(out.view(), batch.log_std_min, batch.log_std_max);
    let sample = squash(mean.view(), log_std.view(), batch.noise);
    let x = critic_inputs(batch.states, sample.action.view());
    let q1 = critics[0].predict(x.view())?;
    let q2 = critics[1].predict(x.view())?;
    let n = batch.states.nrows();
    let total: f64 = (0..n)
        .map(|i| batch.alpha * sample.log_prob[i] - q1[[i, 0]].min(q2[[i, 0]]))
        .sum();
    Ok(total / n as f64)
}

pub fn actor_loss_and_grad(actor: &Mlp, critics: [&Mlp; 2], batch: &ActorBatch<'_>) -> Result<ActorLossOutput> {
    let n = batch.states.nrows();
    if n == 0 {
        return Err(Error::EmptySource("empty actor batch".into()));
    }
    let (out, actor_tape) = actor.forward(batch.states)?;
    let a_dim = out.ncols() / 2;
    let (mean, log_std, mask) = split_policy_output(out.view(), batch.log_std_min, batch.log_std_max);
    let sample = squash(mean.view(), log_std.view(), batch.noise);
    let x = critic_inputs(batch.states, sample.action.view());
    let (q1, tape1) = critics[0].forward(x.view())?;
    let (q2, tape2) = critics[1].forward(x.view())?;

    // dJ/dq = -1/n routed to whichever critic attains the min.
    let mut g1 = Array2::zeros((n, 1));
    let mut g2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
        loss += batch.alpha * sample.log_prob[i] - a.min(b);
        if a <= b {
            g1[[i, 0]] = -1.0 / n as f64;
        } else {
            g2[[i, 0]] = -1.0 / n as f64;
        }
    }
    let (_, dx1) = critics[0].backward(&tape1, g1.view())?;
    let (_, dx2) = critics[1].backward(&tape2, g2.view())?;
    let s_dim = batch.states.ncols();
    let d_action = &dx1.slice(s![.., s_dim..]) + &dx2.slice(s![.., s_dim..]);

    let scale = batch.alpha / n as f64;
    let mut grad_out = Array2::zeros((n, 2 * a_dim));
    for i in 0..n {
        for j in 0..a_dim {
            let t = sample.action[[i, j]];
            let std_eps = log_std[[i, j]].exp() * batch.noise[[i, j]];
            // d(-log(1 - tanh²u))/du = 2 tanh u
            let d_u = scale * 2.0 * t + d_action[[i, j]] * (1.0 - t * t);
            grad_out[[i, j]] = d_u;
            grad_out[[i, a_dim + j]] = mask[[i, j]] * (-scale + d_u * std_eps);
        }
    }
    let (grads, _) = actor.backward(&actor_tape, grad_out.view())?;
    Ok(ActorLossOutput {
        loss: loss / n as f64,
        grads,
        log_prob: sample.log_prob,
    })
}

/// `-log_alpha · mean(log π + target_entropy)`.
pub fn temperature_loss(log_alpha: f64, log_prob: ArrayView1<f64>, target_entropy: f64) -> f64 {
    log_alpha * temperature_grad(log_prob, target_entropy)
}

/// Derivative of [`temperature_loss`] with respect to `log_alpha`.
pub fn temperature_grad(log_prob: ArrayView1<f64>, target_entropy: f64) -> f64 {
    -log_prob.mean().unwrap_or(0.0) - target_entropy
}
