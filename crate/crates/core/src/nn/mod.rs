//! Feed-forward network substrate: ReLU MLPs, tape-based reverse mode and Adam.

mod adam;
mod mlp;
mod params;

pub use adam::{adam_step, adam_update, AdamConfig};
pub use mlp::{Mlp, MlpSpec, Tape};
pub use params::{Gradients, ParamAddr, ParamEntry, ParamTree, TensorRole};
