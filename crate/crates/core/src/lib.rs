//! Model-based reinforcement learning with world-model resetting.
//!
//! The crate implements MBPO-style training (a probabilistic ensemble world
//! model feeding synthetic transitions to a SAC agent) together with
//! scheduled, scoped resets of the world model and the model-error
//! diagnostics MMSE and VME.
//!
//! ```no_run
//! use model_reset::harness::{run, RunConfig};
//! use model_reset::reset::ResetTarget;
//!
//! let mut cfg = RunConfig::default().with_model_utd_multiplier(10.0);
//! cfg.reset.target = ResetTarget::WorldModel;
//! cfg.reset.interval = 5_000;
//! cfg.out_dir = "runs/reset".into();
//! let summary = run(&cfg).unwrap();
//! println!("final return {}", summary.final_window_return);
//! ```

pub(crate) mod codec;
pub mod envs;
pub mod error;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod reset;
pub mod rng;
pub mod sac;
pub mod world_model;

pub use error::{Error, Result};
