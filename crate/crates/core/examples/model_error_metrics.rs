//! MMSE and VME of a trained run, recomputed offline from its saved model,
//! agent and buffer, plus the error on a buffer reserved from another run.
//!
//! cargo run --release --example model_error_metrics

use model_reset::harness::{eval_model, run, RunConfig, AGENT_FILE, MODEL_FILE};
use model_reset::metrics::{read_metrics, reserved_buffer_mmse};
use model_reset::rng;
use model_reset::world_model::GaussianEnsemble;

fn main() -> model_reset::Result<()> {
    let root = std::env::temp_dir().join("model_error_metrics");
    let base = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pendulum_desk.toml"))?;

    // A reserved buffer collected by a separate run.
    let mut reserve = base.clone();
    reserve.total_steps = 3000;
    reserve.seed = 77;
    reserve.out_dir = root.join("reserve");
    reserve.buffer_out = Some(root.join("reserved.pbuf"));
    run(&reserve)?;

    let mut cfg = base;
    cfg.total_steps = 3000;
    cfg.out_dir = root.join("run");
    cfg.buffer_out = Some(root.join("d_env.pbuf"));
    cfg.reserved_buffer = reserve.buffer_out.clone();
    let summary = run(&cfg)?;

    println!("checkpoint metrics (metrics.csv):");
    for r in read_metrics(cfg.out_dir.join("metrics.csv"))? {
        println!("  step {:>5}  return {:>9.2}  mmse {:.5}  vme {:.4}", r.env_step, r.eval_return, r.mmse, r.vme);
    }
    let (mmse, vme) = eval_model(
        &cfg.out_dir.join(MODEL_FILE),
        cfg.buffer_out.as_ref().unwrap(),
        Some(&cfg.out_dir.join(AGENT_FILE)),
        0,
    )?;
    println!("offline on the whole D_env: mmse {mmse:.5}  vme {:.4}", vme.unwrap_or(f64::NAN));
    println!("reserved buffer mmse at end of run: {:.5}", summary.reserved_mmse.unwrap_or(f64::NAN));

    let model = GaussianEnsemble::load(cfg.out_dir.join(MODEL_FILE))?;
    let again = reserved_buffer_mmse(&model, reserve.buffer_out.as_ref().unwrap(), 1024, &mut rng::stream(1))?;
    println!("reserved buffer mmse from the saved model: {again:.5}");
    Ok(())
}
