//! MBPO on the pendulum swing-up with the default desk-scale settings.
//!
//! cargo run --release --example pendulum_mbpo -- [total_steps] [model_utd_multiplier] [seed]

use model_reset::harness::{run, RunConfig};

fn main() -> model_reset::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let mut cfg = RunConfig::default().with_model_utd_multiplier(arg(1, 1.0));
    cfg.total_steps = arg(0, 8000.0) as u64;
    cfg.seed = arg(2, 0.0) as u64;
    cfg.agent_utd = 10;
    cfg.record_wall_time = true;
    cfg.out_dir = std::env::temp_dir().join(format!("pendulum_mbpo_{}", cfg.seed));

    let summary = run(&cfg)?;
    for r in &summary.records {
        println!(
            "step {:>6}  return {:>9.2}  mmse {:.5}  vme {:.4}  t {:.1}s",
            r.env_step, r.eval_return, r.mmse, r.vme, r.wall_time
        );
    }
    println!(
        "final-window return {:.2}, agent updates {}, model trainings {}",
        summary.final_window_return, summary.agent_updates, summary.model_trainings
    );
    Ok(())
}
