//! Paired-seed comparison of model UTD ratios with and without resets.
//!
//! cargo run --release --example utd_sweep -- [seeds] [config.toml]
//!
//! Runs four variants per seed on the pendulum: 1x and 10x the default model
//! UTD, 10x with world-model reset and 10x with agent reset.

use model_reset::harness::{run, RunConfig};
use model_reset::reset::ResetTarget;

fn main() -> model_reset::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(2);
    let base = match args.get(1) {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml_str(include_str!("../configs/pendulum_desk.toml"))?,
    };
    let variants = [
        ("1x", 1.0, ResetTarget::None),
        ("10x", 10.0, ResetTarget::None),
        ("10x+model-reset", 10.0, ResetTarget::WorldModel),
        ("10x+agent-reset", 10.0, ResetTarget::Agent),
    ];
    for seed in 0..seeds {
        let mut line = format!("seed {seed}:");
        for (name, mult, target) in variants {
            let mut cfg = base.clone().with_model_utd_multiplier(mult);
            cfg.seed = seed;
            cfg.reset.target = target;
            cfg.record_wall_time = true;
            cfg.out_dir = std::env::temp_dir().join(format!("utd_sweep/{name}/seed{seed}"));
            let s = run(&cfg)?;
            let secs = s.records.last().map_or(0.0, |r| r.wall_time);
            line += &format!("  {name} {:.1} ({secs:.0}s)", s.final_window_return);
            for p in &s.resets {
                if let Some(after) = p.mmse_after {
                    line += &format!(" [{}: {:.4}->{:.4}]", p.step, p.mmse_before, after);
                }
            }
        }
        println!("{line}");
    }
    Ok(())
}
