//! Training loop, configuration, sweeps and the saved-policy buffer
//! experiment.
//!
//! Per environment step the loop acts and stores the transition, trains the
//! model when due (regenerating `D_model` right after), runs `U_a` agent
//! updates, writes a checkpoint row every `checkpoint_interval` steps and
//! finally applies a scheduled reset.

mod config;
mod run;
mod sweep;

use std::path::Path;

pub use config::{ModelSchedule, RunConfig, StepOrder, SweepAxes, SweepSpec, D_UTD};
pub use run::{
    eval_model, final_window_mean, run, ResetProbe, RunSummary, AGENT_FILE, BUFFER_FILE, CONFIG_FILE, EVENTS_FILE,
    FAILED_FILE, METRICS_FILE, MODEL_FILE,
};
pub use sweep::{cell_seed, cells, sweep, CellSummary, MeanCi, SweepCell, SUMMARY_FILE};

use crate::error::{Error, Result};

/// Paired outcome of [`seed_buffer_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct SeedBufferOutcome {
    pub preinit: RunSummary,
    pub random: RunSummary,
}

/// Runs `config` twice: once with the warm-up driven by the saved agent's
/// stochastic policy and once with uniform random warm-up. Artifacts go to
/// `out_dir/preinit` and `out_dir/random`.
pub fn seed_buffer_experiment(config: &RunConfig, saved_agent_path: &Path) -> Result<SeedBufferOutcome> {
    if !saved_agent_path.is_file() {
        return Err(Error::config(format!(
            "saved agent {} does not exist",
            saved_agent_path.display()
        )));
    }
    crate::sac::SacAgent::load(saved_agent_path)?;
    let mut pre = config.clone();
    pre.warmup_agent = Some(saved_agent_path.to_path_buf());
    pre.buffer_in = None;
    pre.variant = "preinit".into();
    pre.out_dir = config.out_dir.join("preinit");
    let mut rnd = config.clone();
    rnd.warmup_agent = None;
    rnd.buffer_in = None;
    rnd.variant = "random".into();
    rnd.out_dir = config.out_dir.join("random");
    Ok(SeedBufferOutcome {
        preinit: run(&pre)?,
        random: run(&rnd)?,
    })
}
