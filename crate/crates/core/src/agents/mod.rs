//! Learning controllers: observation builders, the distributional Q-learning
//! agent, the three controller topologies (centralized, distributed with
//! optional federated averaging, hierarchical), and the training driver.

pub mod controllers;
pub mod obs;
pub mod rainbow;
pub mod trainer;

pub use controllers::{
    export_embeddings, local_reward, v_max_association, v_max_scheduler, AgentError,
    CentralizedController, CentralizedPolicy, CheckpointBundle, DistributedController,
    DistributedPolicy, EmbeddingRecord, HierarchicalController, LearnedScheduler,
    OptionTransition, PolicyAssociator, PolicyBundle, PolicyScheduler, SchedulerAgent,
};
pub use obs::{
    build_global_observation, build_local_observation, build_scheduler_observation,
    global_obs_shape, local_obs_shape, scheduler_obs_shape, GlobalObservation, GridObservation,
    LocalObservation, SchedulerObservation,
};
pub use rainbow::{NStepQueue, Rainbow, RainbowSpec, Transition};
pub use trainer::{
    train, Controller, NullSink, TrainOutcome, TrainPoint, TrainSink, EVAL_OFFSET,
};
