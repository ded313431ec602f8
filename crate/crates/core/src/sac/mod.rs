//! Soft actor-critic: squashed-Gaussian actor, twin critics with Polyak
//! targets and a learned entropy temperature.

mod agent;
pub mod losses;

pub use agent::{SacAgent, SacConfig, UpdateStats};

use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Maps a batch of states to a batch of environment-scale actions.
pub trait Policy {
    fn act_batch(&self, states: ArrayView2<f64>, mode: ActMode, rng: &mut RngStream) -> Result<Array2<f64>>;
}

/// Uniformly random actions inside a box; used for warm-up.
#[derive(Clone, Debug)]
pub struct UniformPolicy {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Policy for UniformPolicy {
    fn act_batch(&self, states: ArrayView2<f64>, _mode: ActMode, rng: &mut RngStream) -> Result<Array2<f64>> {
        use rand::Rng;
        let mut out = Array2::zeros((states.nrows(), self.low.len()));
        for mut row in out.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = rng.random_range(self.low[j]..self.high[j]);
            }
        }
        Ok(out)
    }
}
