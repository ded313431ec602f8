//! Probabilistic ensemble dynamics model trained by Gaussian maximum
//! likelihood, and truncated model rollouts that feed `D_model`.
//!
//! Members predict the state delta and the reward; [`DynamicsModel`]
//! reconstructs `s' = s + Δs` so callers only ever see next states.

mod ensemble;
mod normalizer;
mod rollout;

pub use ensemble::{
    gaussian_nll, nll_loss, nll_loss_and_grad, DynamicsModel, GaussianEnsemble, Member, MemberGrads,
    TrainStats, WorldModelConfig,
};
pub use normalizer::Normalizer;
pub use rollout::{rollout, RolloutStats};
