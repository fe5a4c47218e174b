//! Simulation and learning core for cell-free multi-group broadcast (CF-MB)
//! delivery of tiled 360° video from UAV cameras to clustered VR users.
//!
//! The crate models the full pipeline: network deployment (gridded access
//! points, hovering UAVs, clustered users), the air-to-ground uplink and
//! terrestrial downlink channels, maximum-ratio combining and broadcast
//! precoding, tile scheduling and AP↔UAV association (proportional-fair,
//! cell-based, cell-free, and learned policies), the tiled-video decode
//! model with its V-PSNR quality metric, and a self-contained deep
//! reinforcement-learning stack (distributional dueling Q-networks with
//! noisy layers, prioritized replay, federated averaging, and a hierarchical
//! scheduler) driving the association and scheduling decisions.
//!
//! Everything is deterministic given a root seed: every random stream is
//! derived from (seed, stream label, index), so repeated runs produce
//! byte-identical metrics.

pub mod agents;
pub mod association;
pub mod channel;
pub mod config;
pub mod deployment;
pub mod engine;
pub mod phy;
pub mod rlcore;
pub mod rng;
pub mod scheduling;
pub mod video;
