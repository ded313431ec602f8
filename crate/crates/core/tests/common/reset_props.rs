//! Reset-operator properties shared by the proptest suite and the acceptance
//! report.

use model_reset::envs::{Environment, PendulumEnv};
use model_reset::nn::Mlp;
use model_reset::reset::{
    apply_reset, fresh_draw_seed, resolve_layers, resolve_members, schedule_check, LayerScope, MemberScope,
    ResetMode, ResetPolicy, ResetTarget, ACTOR_ID, CRITIC_IDS,
};
use model_reset::rng;
use model_reset::sac::{SacAgent, SacConfig};
use model_reset::world_model::{GaussianEnsemble, WorldModelConfig};
use ndarray::Zip;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::Rng;

pub fn ensemble(m: usize, seed: u64) -> GaussianEnsemble {
    let cfg = WorldModelConfig {
        ensemble_size: m,
        hidden: vec![5; 4],
        ..WorldModelConfig::default()
    };
    GaussianEnsemble::new(3, 1, &cfg, seed).unwrap()
}

pub fn agent(seed: u64) -> SacAgent {
    let cfg = SacConfig {
        hidden: vec![6, 6, 6],
        ..SacConfig::default()
    };
    SacAgent::new(PendulumEnv::new().spec(), &cfg, seed).unwrap()
}

/// Makes every scalar and Adam moment non-trivial so unchanged entries are
/// distinguishable from reset ones.
pub fn scramble(net: &mut Mlp, seed: u64) {
    let mut r = rng::stream(seed);
    for (_, e) in net.params_mut().iter_mut() {
        e.value.mapv_inplace(|x| x + r.random_range(-1.0..1.0));
        e.m.mapv_inplace(|_| r.random_range(-1.0..1.0));
        e.v.mapv_inplace(|_| r.random_range(0.1..1.0));
        e.step = 17;
    }
}

pub fn layer_scope() -> impl Strategy<Value = LayerScope> {
    prop_oneof![
        Just(LayerScope::AllLayers),
        (1usize..=4).prop_map(|k| LayerScope::LastK { k }),
        (1usize..=4).prop_map(|k| LayerScope::FirstK { k }),
        (1usize..=4, any::<u64>()).prop_map(|(k, seed)| LayerScope::RandomK { k, seed }),
        (1usize..=4).prop_map(|k| LayerScope::LastKWithHead { k }),
    ]
}

pub fn member_scope(m: usize) -> impl Strategy<Value = MemberScope> {
    prop_oneof![
        Just(MemberScope::All),
        (1..=m).prop_map(|m| MemberScope::First { m }),
        (1..=m, any::<u64>()).prop_map(|(m, seed)| MemberScope::Random { m, seed }),
    ]
}

pub fn mode() -> impl Strategy<Value = ResetMode> {
    prop_oneof![
        Just(ResetMode::Hard),
        (0.01f64..=1.0).prop_map(|alpha| ResetMode::Ema { alpha }),
    ]
}

#[derive(Debug, Clone)]
pub struct ModelCase {
    pub layers: LayerScope,
    pub members: MemberScope,
    pub mode: ResetMode,
    pub reset_moments: bool,
    pub step: u64,
    pub seed: u64,
}

pub fn model_case() -> impl Strategy<Value = ModelCase> {
    (layer_scope(), member_scope(4), mode(), any::<bool>(), 1u64..100_000, any::<u64>()).prop_map(
        |(layers, members, mode, reset_moments, step, seed)| ModelCase {
            layers,
            members,
            mode,
            reset_moments,
            step,
            seed,
        },
    )
}

fn ema(mode: ResetMode, old: f64, fresh: f64) -> f64 {
    match mode {
        ResetMode::Hard => fresh,
        ResetMode::Ema { alpha } => (1.0 - alpha) * old + alpha * fresh,
    }
}

/// In-scope tensors equal the reset formula bit for bit, everything else is
/// untouched, and Adam moments follow the optimizer-reset flag.
pub fn model_reset_scope(c: &ModelCase) -> Result<(), TestCaseError> {
    let mut model = ensemble(4, c.seed);
    for (i, m) in model.members.iter_mut().enumerate() {
        scramble(&mut m.net, c.seed ^ i as u64);
    }
    let before = model.clone();
    let policy = ResetPolicy {
        target: ResetTarget::WorldModel,
        interval: 1,
        layer_scope: c.layers,
        member_scope: c.members,
        mode: c.mode,
        reset_optimizer_state: c.reset_moments,
    };
    let mut a = agent(0);
    let agent_before = a.clone();
    let report = apply_reset(&policy, &mut model, &mut a, c.step, c.seed).unwrap();
    prop_assert_eq!(&a, &agent_before);

    let in_members = resolve_members(c.members, 4).unwrap();
    let in_layers = resolve_layers(c.layers, 5).unwrap();
    let mut expected = 0;
    for (i, (now, old)) in model.members.iter().zip(&before.members).enumerate() {
        prop_assert_eq!(&now.max_logvar, &old.max_logvar);
        prop_assert_eq!(&now.min_logvar, &old.min_logvar);
        let fresh = Mlp::init(now.net.spec(), fresh_draw_seed(c.seed, c.step, i as u64)).unwrap();
        for addr in now.net.params().addresses() {
            let (e_now, e_old) = (now.net.params().get(addr).unwrap(), old.net.params().get(addr).unwrap());
            if !(in_members.contains(&i) && in_layers.contains(&addr.layer)) {
                prop_assert_eq!(e_now, e_old);
                continue;
            }
            expected += 1;
            let e_fresh = fresh.params().get(addr).unwrap();
            let mut exact = true;
            let mut all_changed = true;
            Zip::from(&e_now.value).and(&e_old.value).and(&e_fresh.value).for_each(|&n, &o, &f| {
                exact &= n.to_bits() == ema(c.mode, o, f).to_bits();
                all_changed &= n != o;
            });
            prop_assert!(exact, "member {} {} does not match the reset formula", i, addr);
            prop_assert!(all_changed, "member {} {} unchanged", i, addr);
            if c.reset_moments {
                prop_assert!(e_now.m.iter().all(|&x| x == 0.0) && e_now.v.iter().all(|&x| x == 0.0));
                prop_assert_eq!(e_now.step, 0);
            } else {
                prop_assert_eq!(&e_now.m, &e_old.m);
                prop_assert_eq!(&e_now.v, &e_old.v);
                prop_assert_eq!(e_now.step, e_old.step);
            }
        }
    }
    prop_assert_eq!(report.addresses_changed.len(), expected);
    Ok(())
}

/// Agent resets cover actor and both critics within the layer scope and
/// leave the world model and temperature alone.
pub fn agent_reset_scope(layers: LayerScope, mode: ResetMode, step: u64, seed: u64) -> Result<(), TestCaseError> {
    let layers = match layers {
        LayerScope::LastK { k } => LayerScope::LastK { k: k.min(3) },
        LayerScope::FirstK { k } => LayerScope::FirstK { k: k.min(3) },
        LayerScope::RandomK { k, seed } => LayerScope::RandomK { k: k.min(3), seed },
        LayerScope::LastKWithHead { k } => LayerScope::LastKWithHead { k: k.min(3) },
        all => all,
    };
    let mut a = agent(seed);
    scramble(&mut a.actor, seed);
    scramble(&mut a.critics[0], seed ^ 1);
    scramble(&mut a.critics[1], seed ^ 2);
    let before = a.clone();
    let mut model = ensemble(1, 0);
    let model_before = model.clone();
    let policy = ResetPolicy {
        target: ResetTarget::Agent,
        layer_scope: layers,
        mode,
        ..ResetPolicy::default()
    };
    apply_reset(&policy, &mut model, &mut a, step, seed).unwrap();
    prop_assert_eq!(&model, &model_before);
    let in_layers = resolve_layers(layers, 4).unwrap();
    let nets = [
        (&a.actor, &before.actor, ACTOR_ID),
        (&a.critics[0], &before.critics[0], CRITIC_IDS[0]),
        (&a.critics[1], &before.critics[1], CRITIC_IDS[1]),
    ];
    for (now, old, id) in nets {
        let fresh = Mlp::init(now.spec(), fresh_draw_seed(seed, step, id)).unwrap();
        for addr in now.params().addresses() {
            let (n, o) = (now.params().get(addr).unwrap(), old.params().get(addr).unwrap());
            if in_layers.contains(&addr.layer) {
                let f = fresh.params().get(addr).unwrap();
                let mut exact = true;
                Zip::from(&n.value).and(&o.value).and(&f.value).for_each(|&n, &o, &f| {
                    exact &= n.to_bits() == ema(mode, o, f).to_bits();
                });
                prop_assert!(exact, "{} does not match the reset formula", addr);
            } else {
                prop_assert_eq!(n, o);
            }
        }
    }
    prop_assert_eq!(&a.log_alpha, &before.log_alpha);
    Ok(())
}

pub fn hard_equals_ema_one(layers: LayerScope, step: u64, seed: u64) -> Result<(), TestCaseError> {
    let mut hard = ensemble(3, seed);
    for (i, m) in hard.members.iter_mut().enumerate() {
        scramble(&mut m.net, seed ^ (i as u64 + 9));
    }
    let mut ema = hard.clone();
    let mut a = agent(0);
    let base = ResetPolicy {
        target: ResetTarget::WorldModel,
        layer_scope: layers,
        ..ResetPolicy::default()
    };
    apply_reset(&ResetPolicy { mode: ResetMode::Hard, ..base.clone() }, &mut hard, &mut a, step, seed).unwrap();
    apply_reset(&ResetPolicy { mode: ResetMode::Ema { alpha: 1.0 }, ..base }, &mut ema, &mut a, step, seed).unwrap();
    for (h, e) in hard.members.iter().zip(&ema.members) {
        for ((_, x), (_, y)) in h.net.params().iter().zip(e.net.params().iter()) {
            prop_assert!(x.value.iter().zip(y.value.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
    Ok(())
}

pub fn schedule_multiples(interval: u64, n: u64) -> Result<(), TestCaseError> {
    let p = ResetPolicy {
        target: ResetTarget::WorldModel,
        interval,
        ..ResetPolicy::default()
    };
    let fired: Vec<u64> = (1..=n).filter(|&s| schedule_check(&p, s)).collect();
    let want: Vec<u64> = (1..=n / interval).map(|k| k * interval).collect();
    prop_assert_eq!(fired, want);
    Ok(())
}
