//! Warm-up with a good saved policy versus uniform random warm-up.
//!
//! Trains a source agent first unless a saved one is given.
//!
//! cargo run --release --example preinit_buffer -- [agent.pagt] [seed]

use std::path::PathBuf;

use model_reset::harness::{run, seed_buffer_experiment, RunConfig, AGENT_FILE};

fn desk() -> model_reset::Result<RunConfig> {
    RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pendulum_desk.toml"))
}

fn main() -> model_reset::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let root = std::env::temp_dir().join("preinit_buffer");

    let agent = match args.first() {
        Some(p) => PathBuf::from(p),
        None => {
            let mut source = desk()?.with_model_utd_multiplier(10.0);
            source.seed = 1000 + seed;
            source.out_dir = root.join("source");
            let s = run(&source)?;
            println!("source agent: final-window return {:.1}", s.final_window_return);
            source.out_dir.join(AGENT_FILE)
        }
    };

    let mut cfg = desk()?.with_model_utd_multiplier(10.0);
    cfg.total_steps = 3000;
    cfg.seed = seed;
    cfg.out_dir = root.join(format!("seed{seed}"));
    let out = seed_buffer_experiment(&cfg, &agent)?;
    for (name, s) in [("preinit", &out.preinit), ("random", &out.random)] {
        let curve: Vec<String> = s.records.iter().map(|r| format!("{:.0}", r.eval_return)).collect();
        println!("{name:>8}: auc {:>9.2}  returns {}", s.return_auc, curve.join(" "));
    }
    Ok(())
}
