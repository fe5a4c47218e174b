//! A small, dependency-free deep-RL toolkit in pure f64: tensor containers
//! and bit-exact checkpoints, neural layer primitives with hand-written
//! reverse-mode gradients, the categorical (C51) distributional machinery,
//! Adam, prioritized experience replay, Boltzmann exploration, and the
//! dueling noisy Q-network that ties them together. Everything is
//! deterministic given a seed, which keeps training runs reproducible.

pub mod distrib;
pub mod layers;
pub mod net;
pub mod optim;
pub mod params;
pub mod policy;
pub mod replay;

pub use distrib::{
    categorical_project, greedy_action, kl_logit_gradient, kl_loss, multistep_return,
    project_bellman, softmax, DistribError, Support,
};
pub use layers::LayerNoise;
pub use net::{Forward, NetError, NetNoise, QNet, QNetConfig};
pub use optim::Adam;
pub use params::{
    fedavg, load_params, params_from_text, params_to_text, save_params, AgentParams, ParamError,
    Tensor,
};
pub use policy::{boltzmann_probs, boltzmann_sample};
pub use replay::{PrioritizedReplay, ReplayError, SampleBatch};
