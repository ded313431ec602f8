//! A small sweep over model UTD and reset target with paired seeds,
//! reading the same spec format as `model-reset sweep --spec`.
//!
//! cargo run --release --example sweep_grid -- [jobs]

use model_reset::harness::{sweep, SweepSpec};

const SPEC: &str = r#"
seeds = 2
paired_seeds = true
out_dir = "/tmp/sweep_grid"

[base]
total_steps = 3000
warmup_steps = 500
model_train_steps = 100
agent_utd = 5
batch_size = 128
model_batch_size = 128
rollout_starts = 20
rollout_every_step = true
model_capacity = 5000
eval_episodes = 2

[base.model]
ensemble_size = 3
hidden = [32, 32, 32, 32]

[base.reset]
interval = 1000

[axes]
model_utd_multiplier = [1.0, 10.0]
reset_target = ["none", "world_model"]
"#;

fn main() -> model_reset::Result<()> {
    let jobs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = SweepSpec::from_toml_str(SPEC)?;
    for c in sweep(&spec, jobs)? {
        println!(
            "cell {} {:<28} return {:>8.2} ± {:>6.2}  mmse {:.5} ± {:.5}  failed {}",
            c.index,
            c.label,
            c.final_return.mean,
            c.final_return.ci95,
            c.final_mmse.mean,
            c.final_mmse.ci95,
            c.failures.len()
        );
    }
    println!("summary written to {}", spec.out_dir.join("summary.csv").display());
    Ok(())
}
