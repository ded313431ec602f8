//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria 1, 2, 6 and 7 are exact checks and fail the process. Criteria 3,
//! 4, 5 and 8 are directional replications on the desk-scale pendulum; they
//! are reported but only fail the process when `ACCEPTANCE_STRICT` is set.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use common::{grad, oracle, reset_props};
use model_reset::envs::{Environment, PendulumEnv};
use model_reset::harness::{self, RunConfig, RunSummary, AGENT_FILE, EVENTS_FILE, METRICS_FILE};
use model_reset::reset::ResetTarget;
use model_reset::sac::SacAgent;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const SEEDS: u64 = 5;
const DESK_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pendulum_desk.toml");

struct Line {
    id: &'static str,
    exact: bool,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn record(&mut self, id: &'static str, exact: bool, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id}: {detail}");
        self.lines.push(Line { id, exact, pass, detail });
    }
}

fn desk() -> RunConfig {
    RunConfig::load(DESK_CONFIG).expect("desk config")
}

fn gradients(report: &mut Report) {
    let t = Instant::now();
    let checks: [(&str, fn(u64) -> f64); 4] = [
        ("nll", grad::nll),
        ("critic", grad::critic),
        ("actor", grad::actor),
        ("temperature", grad::temperature),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, check) in checks {
        let worst = grad::worst(check);
        pass &= worst < grad::REL_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    report.record(
        "1 gradient soundness",
        true,
        pass,
        format!(
            "worst relative error over {} instances: {} (tol {:.0e}, h {:.0e}) in {:.1}s",
            grad::INSTANCES,
            parts.join(", "),
            grad::REL_TOL,
            grad::H,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn oracle_fit(report: &mut Report) {
    let t = Instant::now();
    let noisy = oracle::ensemble_fit(0.05, 20_000, oracle::TRAIN_STEPS, 11);
    let exact = oracle::ensemble_fit(0.0, 20_000, oracle::TRAIN_STEPS, 12);
    let rel = (noisy.mmse - noisy.floor).abs() / noisy.floor;
    let pass = rel <= 0.2 && exact.mmse < 1e-3;
    report.record(
        "2 oracle model fit",
        true,
        pass,
        format!(
            "sigma 0.05: mmse {:.5} vs floor {:.5} ({:.1}% off, tol 20%); sigma 0: mmse {:.2e} (tol 1e-3) in {:.1}s",
            noisy.mmse,
            noisy.floor,
            100.0 * rel,
            exact.mmse,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn reset_properties(report: &mut Report) {
    let t = Instant::now();
    let cases = 256;
    let runner = || {
        TestRunner::new_with_rng(
            Config {
                cases,
                failure_persistence: None,
                ..Config::default()
            },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        )
    };
    let mut failures = Vec::new();
    if let Err(e) = runner().run(&reset_props::model_case(), |c| reset_props::model_reset_scope(&c)) {
        failures.push(format!("model scope/EMA/moments: {e}"));
    }
    if let Err(e) = runner().run(
        &(reset_props::layer_scope(), reset_props::mode(), 1u64..1000, any::<u64>()),
        |(l, m, s, seed)| reset_props::agent_reset_scope(l, m, s, seed),
    ) {
        failures.push(format!("agent scope: {e}"));
    }
    if let Err(e) = runner().run(&(reset_props::layer_scope(), 1u64..100_000, any::<u64>()), |(l, s, seed)| {
        reset_props::hard_equals_ema_one(l, s, seed)
    }) {
        failures.push(format!("ema(1) == hard: {e}"));
    }
    if let Err(e) = runner().run(&(1u64..5000, 1u64..20_000), |(i, n)| reset_props::schedule_multiples(i, n)) {
        failures.push(format!("schedule: {e}"));
    }
    let detail = if failures.is_empty() {
        format!(
            "scope isolation, EMA formula bitwise, ema(1) == hard, moment zeroing, schedule multiples: {cases} cases each in {:.1}s",
            t.elapsed().as_secs_f64()
        )
    } else {
        failures.join("; ")
    };
    report.record("6 reset operator exactness", true, failures.is_empty(), detail);
}

fn determinism(report: &mut Report, root: &Path) {
    let t = Instant::now();
    let mut cfg = desk();
    cfg.total_steps = 2000;
    cfg.reset.target = ResetTarget::WorldModel;
    cfg.reset.interval = 1500;
    cfg = cfg.with_model_utd_multiplier(10.0);
    let mut same = true;
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| root.join("determinism").join(d)).collect();
    for d in &dirs {
        cfg.out_dir = d.clone();
        harness::run(&cfg).expect("determinism run");
    }
    for f in [METRICS_FILE, EVENTS_FILE] {
        same &= std::fs::read(dirs[0].join(f)).unwrap() == std::fs::read(dirs[1].join(f)).unwrap();
    }
    report.record(
        "7 determinism",
        true,
        same,
        format!(
            "two 2000-step runs with a reset: metrics.csv and events.jsonl {} in {:.1}s",
            if same { "byte-identical" } else { "differ" },
            t.elapsed().as_secs_f64()
        ),
    );
}

struct Variants {
    one: Vec<RunSummary>,
    ten: Vec<RunSummary>,
    model_reset: Vec<RunSummary>,
    agent_reset: Vec<RunSummary>,
    slowest: f64,
}

fn utd_runs(root: &Path) -> Variants {
    let mut v = Variants {
        one: Vec::new(),
        ten: Vec::new(),
        model_reset: Vec::new(),
        agent_reset: Vec::new(),
        slowest: 0.0,
    };
    for seed in 0..SEEDS {
        for (name, mult, target) in [
            ("1x", 1.0, ResetTarget::None),
            ("10x", 10.0, ResetTarget::None),
            ("10x_model_reset", 10.0, ResetTarget::WorldModel),
            ("10x_agent_reset", 10.0, ResetTarget::Agent),
        ] {
            let mut cfg = desk().with_model_utd_multiplier(mult);
            cfg.seed = seed;
            cfg.variant = name.into();
            cfg.reset.target = target;
            cfg.out_dir = root.join(name).join(format!("seed{seed}"));
            let t = Instant::now();
            let s = harness::run(&cfg).expect("utd run");
            v.slowest = v.slowest.max(t.elapsed().as_secs_f64());
            println!(
                "  seed {seed} {name:>16}: final-window return {:9.2}, final-window mmse {:.5}, {:.0}s",
                s.final_window_return,
                s.final_window_mmse,
                t.elapsed().as_secs_f64()
            );
            match target {
                ResetTarget::None if mult == 1.0 => v.one.push(s),
                ResetTarget::None => v.ten.push(s),
                ResetTarget::WorldModel => v.model_reset.push(s),
                ResetTarget::Agent => v.agent_reset.push(s),
            }
        }
    }
    v
}

fn paired(a: &[RunSummary], b: &[RunSummary], pred: impl Fn(f64, f64) -> bool) -> usize {
    a.iter()
        .zip(b)
        .filter(|(x, y)| pred(x.final_window_return, y.final_window_return))
        .count()
}

fn returns(xs: &[RunSummary]) -> String {
    xs.iter().map(|s| format!("{:.0}", s.final_window_return)).collect::<Vec<_>>().join(" ")
}

fn directional(report: &mut Report, v: &Variants) {
    let need = 4;
    let a = paired(&v.ten, &v.one, |ten, one| ten < one);
    report.record(
        "3a 10x model UTD below 1x",
        false,
        a >= need,
        format!(
            "{a}/{SEEDS} seeds (need {need}); 1x [{}] 10x [{}]; slowest run {:.0}s",
            returns(&v.one),
            returns(&v.ten),
            v.slowest
        ),
    );
    let b = paired(&v.model_reset, &v.ten, |reset, plain| reset >= plain);
    report.record(
        "3b model reset recovers 10x",
        false,
        b >= need,
        format!(
            "{b}/{SEEDS} seeds (need {need}); 10x+model reset [{}] 10x [{}]",
            returns(&v.model_reset),
            returns(&v.ten)
        ),
    );

    let probes: Vec<(f64, f64)> = v
        .model_reset
        .iter()
        .flat_map(|s| s.resets.iter().filter_map(|r| r.mmse_after.map(|after| (r.mmse_before, after))))
        .collect();
    let lower = probes.iter().filter(|(before, after)| after < before).count();
    report.record(
        "4 reset-event mmse signature",
        false,
        2 * lower > probes.len(),
        format!(
            "{lower}/{} probed reset events have lower mmse 1000 steps later (need a majority)",
            probes.len()
        ),
    );

    let c = paired(&v.agent_reset, &v.model_reset, |agent, model| agent <= model);
    report.record(
        "5 agent reset negative control",
        false,
        c >= need,
        format!(
            "{c}/{SEEDS} seeds (need {need}); 10x+agent reset [{}] 10x+model reset [{}]",
            returns(&v.agent_reset),
            returns(&v.model_reset)
        ),
    );
}

fn seed_buffer(report: &mut Report, v: &Variants, root: &Path) {
    let t = Instant::now();
    let best = v
        .ten
        .iter()
        .chain(&v.model_reset)
        .max_by(|a, b| a.final_window_return.total_cmp(&b.final_window_return))
        .expect("at least one 10x run");
    let near_optimal = best.out_dir.join(AGENT_FILE);

    let random_agent = root.join("random_agent.pagt");
    SacAgent::new(PendulumEnv::new().spec(), &desk().sac, 12345)
        .unwrap()
        .save(&random_agent)
        .unwrap();

    let run_pairs = |saved: &Path, tag: &str| -> Vec<(f64, f64)> {
        (0..SEEDS)
            .map(|seed| {
                let mut cfg = desk().with_model_utd_multiplier(10.0);
                cfg.seed = 100 + seed;
                cfg.out_dir = root.join(tag).join(format!("seed{seed}"));
                let o = harness::seed_buffer_experiment(&cfg, saved).expect("seed-buffer run");
                (o.preinit.return_auc, o.random.return_auc)
            })
            .collect()
    };
    let near = run_pairs(&near_optimal, "seed_buffer_near_optimal");
    let wins = near.iter().filter(|(pre, rnd)| pre > rnd).count();
    let fmt = |xs: &[(f64, f64)]| {
        xs.iter()
            .map(|(p, r)| format!("{p:.0}/{r:.0}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let null = run_pairs(&random_agent, "seed_buffer_random_policy");
    let null_wins = null.iter().filter(|(pre, rnd)| pre > rnd).count();
    report.record(
        "8 pre-initialized buffer",
        false,
        wins >= 4,
        format!(
            "near-optimal policy (final-window {:.0}): {wins}/{SEEDS} seeds with higher AUC (need 4), preinit/random [{}]; \
             null control with a random policy: {null_wins}/{SEEDS} [{}]; {:.0}s",
            best.final_window_return,
            fmt(&near),
            fmt(&null),
            t.elapsed().as_secs_f64()
        ),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the default harness.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let dir = tempfile::tempdir().unwrap();
    let mut report = Report::default();

    gradients(&mut report);
    oracle_fit(&mut report);
    reset_properties(&mut report);
    determinism(&mut report, dir.path());
    println!("directional runs on {DESK_CONFIG} ({SEEDS} paired seeds):");
    let v = utd_runs(dir.path());
    directional(&mut report, &v);
    seed_buffer(&mut report, &v, dir.path());

    let passed = report.lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} criteria pass", report.lines.len());
    let fatal: Vec<&Line> = report.lines.iter().filter(|l| !l.pass && (l.exact || strict)).collect();
    for l in &fatal {
        eprintln!("failed: {} ({})", l.id, l.detail);
    }
    if fatal.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
