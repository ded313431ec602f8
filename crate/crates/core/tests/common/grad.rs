//! Analytic gradients against central finite differences. Each check returns
//! the worst relative error over every scalar it probed.

use model_reset::nn::{Gradients, Mlp, MlpSpec, ParamAddr, ParamEntry};
use model_reset::rng;
use model_reset::sac::losses::{
    actor_loss, actor_loss_and_grad, critic_loss, critic_loss_and_grad, split_policy_output, squash,
    temperature_grad, temperature_loss, ActorBatch,
};
use model_reset::world_model::{nll_loss, nll_loss_and_grad, Member};
use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;
pub const INSTANCES: u64 = 20;
/// Below this magnitude both sides are treated as zero.
const ABS_FLOOR: f64 = 1e-7;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABS_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn randn(r: &mut rng::RngStream, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * r.sample::<f64, _>(StandardNormal))
}

/// Networks start with zero biases, which can park a pre-activation exactly
/// on the ReLU kink where a central difference is not a derivative.
fn jittered(spec: &MlpSpec, seed: u64) -> Mlp {
    let mut net = Mlp::init(spec, seed).unwrap();
    let mut r = rng::stream(seed ^ 0xb1a5);
    for (_, e) in net.params_mut().iter_mut() {
        if e.value.nrows() == 1 {
            e.value.mapv_inplace(|_| 0.1 * r.sample::<f64, _>(StandardNormal));
        }
    }
    net
}

/// Required distance of every kink argument (hidden pre-activations, the
/// twin-critic min, the log-std clamp) from its kink. Instances closer than
/// this are redrawn, since a central difference straddling a kink does not
/// estimate the derivative.
const KINK_MARGIN: f64 = 1e-3;

fn preact_margin(net: &Mlp, x: ArrayView2<f64>) -> f64 {
    let mut h = x.to_owned();
    let mut margin = f64::INFINITY;
    for layer in 0..net.num_layers() - 1 {
        let w = &net.params().get(ParamAddr::weight(layer)).unwrap().value;
        let b = &net.params().get(ParamAddr::bias(layer)).unwrap().value;
        let z = h.dot(w) + b;
        margin = margin.min(z.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
        h = z.mapv(|v| v.max(0.0));
    }
    margin
}

/// Draws instance data from successive sub-streams until it clears the
/// kink margin.
fn draw<T>(base: u64, mut make: impl FnMut(&mut rng::RngStream) -> T, margin: impl Fn(&T) -> f64) -> T {
    for attempt in 0.. {
        let mut r = rng::stream(rng::derive_seed(base, &[attempt]));
        let data = make(&mut r);
        if margin(&data) >= KINK_MARGIN {
            return data;
        }
    }
    unreachable!()
}

fn worst_over_net<F>(net: &mut Mlp, grads: &Gradients, mut loss: F) -> f64
where
    F: FnMut(&Mlp) -> f64,
{
    let mut worst = 0.0f64;
    let addrs: Vec<_> = net.params().addresses().collect();
    for addr in addrs {
        let g = grads.get(addr).unwrap().clone();
        let (rows, cols) = g.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.params().get(addr).unwrap().value[[i, j]];
                net.params_mut().get_mut(addr).unwrap().value[[i, j]] = orig + H;
                let up = loss(net);
                net.params_mut().get_mut(addr).unwrap().value[[i, j]] = orig - H;
                let down = loss(net);
                net.params_mut().get_mut(addr).unwrap().value[[i, j]] = orig;
                worst = worst.max(rel_error(g[[i, j]], (up - down) / (2.0 * H)));
            }
        }
    }
    worst
}

fn bound_entry(m: &mut Member, bound: usize) -> &mut ParamEntry {
    if bound == 0 {
        &mut m.max_logvar
    } else {
        &mut m.min_logvar
    }
}

/// Gaussian NLL with soft variance bounds: network weights and both bound
/// vectors.
pub fn nll(inst: u64) -> f64 {
    let mut r = rng::stream(100 + inst);
    let (din, dout) = (3, 3);
    let net = jittered(&MlpSpec::new(din, &[6, 5], 2 * dout), inst);
    let mut member = Member {
        net,
        max_logvar: ParamEntry::new(Array2::from_shape_fn((1, dout), |_| 0.5 + r.random::<f64>())),
        min_logvar: ParamEntry::new(Array2::from_shape_fn((1, dout), |_| -3.0 - r.random::<f64>())),
    };
    let (x, y) = draw(
        100 + inst,
        |r| (randn(r, 5, din, 1.0), randn(r, 5, dout, 0.7)),
        |(x, _)| preact_margin(&member.net, x.view()),
    );
    let reg = 0.01;
    let (_, grads) = nll_loss_and_grad(&member, x.view(), y.view(), reg).unwrap();

    let mut net = member.net.clone();
    let mut worst = {
        let m = &member;
        worst_over_net(&mut net, &grads.net, |n| {
            let probe = Member {
                net: n.clone(),
                max_logvar: m.max_logvar.clone(),
                min_logvar: m.min_logvar.clone(),
            };
            nll_loss(&probe, x.view(), y.view(), reg).unwrap()
        })
    };
    for bound in 0..2 {
        let g = if bound == 0 { &grads.max_logvar } else { &grads.min_logvar };
        for j in 0..dout {
            let orig = bound_entry(&mut member, bound).value[[0, j]];
            bound_entry(&mut member, bound).value[[0, j]] = orig + H;
            let up = nll_loss(&member, x.view(), y.view(), reg).unwrap();
            bound_entry(&mut member, bound).value[[0, j]] = orig - H;
            let down = nll_loss(&member, x.view(), y.view(), reg).unwrap();
            bound_entry(&mut member, bound).value[[0, j]] = orig;
            worst = worst.max(rel_error(g[[0, j]], (up - down) / (2.0 * H)));
        }
    }
    worst
}

pub fn critic(inst: u64) -> f64 {
    let mut critic = jittered(&MlpSpec::new(4, &[7, 6], 1), inst);
    let n = 2 + (inst as usize % 4);
    let (x, y) = draw(
        200 + inst,
        |r| {
            let x = randn(r, n, 4, 1.0);
            let y = Array1::from_shape_simple_fn(n, || r.sample::<f64, _>(StandardNormal));
            (x, y)
        },
        |(x, _)| preact_margin(&critic, x.view()),
    );
    let (_, grads) = critic_loss_and_grad(&critic, x.view(), y.view()).unwrap();
    worst_over_net(&mut critic, &grads, |c| critic_loss(c, x.view(), y.view()).unwrap())
}

pub fn actor(inst: u64) -> f64 {
    let (s_dim, a_dim) = (3, 1 + inst as usize % 2);
    let mut actor = jittered(&MlpSpec::new(s_dim, &[6, 6], 2 * a_dim), inst);
    let c1 = jittered(&MlpSpec::new(s_dim + a_dim, &[6, 5], 1), 1000 + inst);
    let c2 = jittered(&MlpSpec::new(s_dim + a_dim, &[6, 5], 1), 2000 + inst);
    let (states, noise, alpha) = draw(
        300 + inst,
        |r| (randn(r, 6, s_dim, 1.0), randn(r, 6, a_dim, 1.0), 0.05 + r.random::<f64>()),
        |(states, noise, _)| {
            let out = actor.predict(states.view()).unwrap();
            let raw_log_std = out.slice(ndarray::s![.., a_dim..]).to_owned();
            let clamp = raw_log_std.iter().fold(f64::INFINITY, |m, v| m.min((v + 20.0).abs()).min((v - 2.0).abs()));
            let (mean, log_std, _) = split_policy_output(out.view(), -20.0, 2.0);
            let sample = squash(mean.view(), log_std.view(), noise.view());
            let x = concatenate![Axis(1), states.view(), sample.action.view()];
            let q1 = c1.predict(x.view()).unwrap();
            let q2 = c2.predict(x.view()).unwrap();
            let twin = (&q1 - &q2).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            preact_margin(&actor, states.view())
                .min(preact_margin(&c1, x.view()))
                .min(preact_margin(&c2, x.view()))
                .min(twin)
                .min(clamp)
        },
    );
    let batch = ActorBatch {
        states: states.view(),
        noise: noise.view(),
        alpha,
        log_std_min: -20.0,
        log_std_max: 2.0,
    };
    let out = actor_loss_and_grad(&actor, [&c1, &c2], &batch).unwrap();
    worst_over_net(&mut actor, &out.grads, |a| actor_loss(a, [&c1, &c2], &batch).unwrap())
}

pub fn temperature(inst: u64) -> f64 {
    let mut r = rng::stream(400 + inst);
    let logp = Array1::from_shape_simple_fn(8, || 2.0 * r.sample::<f64, _>(StandardNormal));
    let target = -1.0 - r.random::<f64>();
    let la = r.random::<f64>() * 4.0 - 2.0;
    let numeric =
        (temperature_loss(la + H, logp.view(), target) - temperature_loss(la - H, logp.view(), target)) / (2.0 * H);
    rel_error(temperature_grad(logp.view(), target), numeric)
}

/// Worst error of `check` over the standard instance set.
pub fn worst(check: fn(u64) -> f64) -> f64 {
    (0..INSTANCES).map(check).fold(0.0, f64::max)
}
