//! The three learning controllers and their frozen evaluation policies.
//!
//! * Centralized: one agent picks the joint AP→UAV map on a global
//!   observation; scheduling stays with the P-PF heuristic.
//! * Distributed: one agent per AP acts on its window observation with a
//!   Boltzmann policy and a window-local reward; optional federated averaging
//!   keeps the population aligned.
//! * Hierarchical: a scheduler meta-agent picks each UAV's tile queue once
//!   per re-scheduling slot (a semi-MDP option); distributed agents handle
//!   association inside the option.
//!
//! Evaluation policies are plain [`Scheduler`]/[`Associator`] implementations
//! over frozen parameters: zero exploration noise, no dropout, greedy.

use crate::agents::obs::{
    build_global_observation, build_local_observation, build_scheduler_observation,
    global_obs_shape, local_obs_shape, scheduler_obs_shape,
};
use crate::agents::rainbow::{Rainbow, RainbowSpec};
use crate::association::{
    action_space_size, decode_joint_action, form_virtual_cells, AssocError, VirtualCellMap,
};
use crate::config::ExperimentConfig;
use crate::engine::{Associator, EngineError, Episode, EpisodeResult, PpfScheduler, Scheduler};
use crate::rlcore::{
    fedavg, greedy_action, kl_logit_gradient, kl_loss, load_params, project_bellman, save_params,
    Adam, AgentParams, ParamError, PrioritizedReplay, QNet, QNetConfig, Support,
};
use crate::rng::{rng_for, CfmbRng};
use crate::scheduling::{select_top_tiles, Schedule};
use crate::video::{vpsnr, vpsnr_cap, FOV_TILES, N_TILES};
use std::path::Path;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("joint action space |U|^|B| = {size} exceeds the configured cap of {cap}")]
    ActionSpaceTooLarge { size: u64, cap: u64 },
    #[error("association: {0}")]
    Assoc(#[from] AssocError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("checkpoint does not match the configured network: {0}")]
    ShapeMismatch(String),
    #[error("parameter file: {0}")]
    Param(#[from] ParamError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Sum of the window users' V-PSNR gains: one AP's local reward.
pub fn local_reward(window_users: &[usize], per_user_gain: &[f64]) -> f64 {
    window_users.iter().map(|&v| per_user_gain[v]).sum()
}

/// Value-support upper bound for association agents: every user gaining its
/// final FoV tile in one slot (the largest possible single-slot step).
pub fn v_max_association(cfg: &ExperimentConfig) -> f64 {
    cfg.agent.v_max_association.unwrap_or_else(|| {
        let max_tile_step = vpsnr_cap() - vpsnr(FOV_TILES, FOV_TILES - 1);
        cfg.deployment.n_users as f64 * max_tile_step
    })
}

/// Value-support upper bound for the scheduler: every user going from zero
/// to fully decoded within one option.
pub fn v_max_scheduler(cfg: &ExperimentConfig) -> f64 {
    cfg.agent
        .v_max_scheduler
        .unwrap_or_else(|| cfg.deployment.n_users as f64 * vpsnr_cap())
}

/// Rebuild a network from checkpointed parameters.
fn net_from_params(netcfg: QNetConfig, params: &AgentParams) -> Result<QNet, AgentError> {
    let mut rng = rng_for(0, "param-load", 0);
    let mut net = QNet::new(netcfg, &mut rng);
    net.params.copy_from(params)?;
    Ok(net)
}

/// Run `f` once for every agent, fanned out over at most `workers` threads.
/// Each agent's update depends only on its own state, so the result is
/// bit-identical for any worker count.
fn for_each_agent_parallel<T: Send, F>(agents: &mut [T], workers: usize, f: F)
where
    F: Fn(&mut T) + Sync,
{
    let workers = workers.max(1).min(agents.len().max(1));
    if workers <= 1 || agents.len() <= 1 {
        for a in agents.iter_mut() {
            f(a);
        }
        return;
    }
    let chunk = agents.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for slice in agents.chunks_mut(chunk) {
            let f = &f;
            scope.spawn(move || {
                for a in slice.iter_mut() {
                    f(a);
                }
            });
        }
    });
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Named parameter sets of one controller — one file per entry on disk.
#[derive(Debug, Clone, Default)]
pub struct CheckpointBundle {
    pub entries: Vec<(String, AgentParams)>,
}

impl CheckpointBundle {
    pub fn entry(&self, name: &str) -> Option<&AgentParams> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    /// Write every entry as `<dir>/<name>.params`.
    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        std::fs::create_dir_all(dir)?;
        for (name, params) in &self.entries {
            save_params(params, &dir.join(format!("{name}.params")))?;
        }
        Ok(())
    }

    /// Load every `*.params` file of a directory, sorted by name.
    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let mut names: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".params").map(str::to_owned)
            })
            .collect();
        names.sort();
        let mut entries = Vec::with_capacity(names.len());
        for name in names {
            let params = load_params(&dir.join(format!("{name}.params")))?;
            entries.push((name, params));
        }
        Ok(Self { entries })
    }
}

// ---------------------------------------------------------------------------
// Evaluation policies
// ---------------------------------------------------------------------------

/// Frozen centralized association policy.
#[derive(Debug, Clone)]
pub struct CentralizedPolicy {
    net: QNet,
    support: Support,
    n_aps: usize,
    n_uavs: usize,
}

impl CentralizedPolicy {
    pub fn from_params(cfg: &ExperimentConfig, params: &AgentParams) -> Result<Self, AgentError> {
        let n_aps = cfg.deployment.ap_rows * cfg.deployment.ap_cols;
        let n_uavs = cfg.deployment.n_uavs;
        let size = action_space_size(n_aps, n_uavs)?;
        let spec = RainbowSpec::association(
            &cfg.agent,
            global_obs_shape(&cfg.deployment),
            size as usize,
            v_max_association(cfg),
        );
        let support = Support::new(spec.v_min, spec.v_max, spec.net.atoms)
            .expect("support bounds are validated by the config");
        Ok(Self { net: net_from_params(spec.net, params)?, support, n_aps, n_uavs })
    }
}

impl Associator for CentralizedPolicy {
    fn associate(&self, ep: &Episode) -> VirtualCellMap {
        let obs = build_global_observation(
            ep.deployment(),
            ep.schedule(),
            ep.cluster_of(),
            ep.states(),
            ep.grid_resolution(),
        );
        let noise = self.net.zero_noise();
        let fwd = self.net.forward(&obs.data, &noise, None).expect("observation matches net");
        let action = greedy_action(&fwd.probs, &self.support) as u64;
        let choices = decode_joint_action(action, self.n_aps, self.n_uavs)
            .expect("greedy action lies inside the joint space");
        form_virtual_cells(&choices, self.n_uavs)
    }
}

/// Frozen per-AP association policies.
#[derive(Debug, Clone)]
pub struct DistributedPolicy {
    nets: Vec<QNet>,
    support: Support,
    n_uavs: usize,
}

impl DistributedPolicy {
    pub fn from_params(
        cfg: &ExperimentConfig,
        params: &[AgentParams],
    ) -> Result<Self, AgentError> {
        let n_aps = cfg.deployment.ap_rows * cfg.deployment.ap_cols;
        if params.len() != n_aps {
            return Err(AgentError::ShapeMismatch(format!(
                "{} parameter sets for {} APs",
                params.len(),
                n_aps
            )));
        }
        let spec = RainbowSpec::association(
            &cfg.agent,
            local_obs_shape(&cfg.deployment),
            cfg.deployment.n_uavs,
            v_max_association(cfg),
        );
        let support = Support::new(spec.v_min, spec.v_max, spec.net.atoms)
            .expect("support bounds are validated by the config");
        let nets = params
            .iter()
            .map(|p| net_from_params(spec.net.clone(), p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { nets, support, n_uavs: cfg.deployment.n_uavs })
    }

    /// Zero-noise forward pass of one AP's net; exposes the hidden embedding.
    pub fn eval_forward(&self, ap: usize, obs: &[f64]) -> (Vec<f64>, usize) {
        let noise = self.nets[ap].zero_noise();
        let fwd = self.nets[ap].forward(obs, &noise, None).expect("observation matches net");
        let action = greedy_action(&fwd.probs, &self.support);
        (fwd.hidden, action)
    }
}

impl Associator for DistributedPolicy {
    fn associate(&self, ep: &Episode) -> VirtualCellMap {
        let choices: Vec<usize> = (0..ep.n_aps())
            .map(|b| {
                let obs = build_local_observation(
                    ep.deployment(),
                    b,
                    ep.window_users(b),
                    ep.schedule(),
                    ep.cluster_of(),
                    ep.states(),
                    ep.grid_resolution(),
                );
                let noise = self.nets[b].zero_noise();
                let fwd =
                    self.nets[b].forward(&obs.data, &noise, None).expect("observation matches net");
                greedy_action(&fwd.probs, &self.support)
            })
            .collect();
        form_virtual_cells(&choices, self.n_uavs)
    }
}

/// Frozen scheduler policy: zero-noise per-tile expectations, top-k.
#[derive(Debug, Clone)]
pub struct LearnedScheduler {
    net: QNet,
    support: Support,
    n_uavs: usize,
}

impl LearnedScheduler {
    pub fn from_params(cfg: &ExperimentConfig, params: &AgentParams) -> Result<Self, AgentError> {
        let n_uavs = cfg.deployment.n_uavs;
        let spec = RainbowSpec::scheduler(
            &cfg.agent,
            scheduler_obs_shape(&cfg.deployment),
            n_uavs * N_TILES,
            v_max_scheduler(cfg),
        );
        let support = Support::new(spec.v_min, spec.v_max, spec.net.atoms)
            .expect("support bounds are validated by the config");
        Ok(Self { net: net_from_params(spec.net, params)?, support, n_uavs })
    }

    fn priorities(&self, obs: &[f64]) -> Vec<[f64; N_TILES]> {
        let noise = self.net.zero_noise();
        let fwd = self.net.forward(obs, &noise, None).expect("observation matches net");
        let nz = self.net.cfg.atoms;
        let mut prios = vec![[0.0; N_TILES]; self.n_uavs];
        for u in 0..self.n_uavs {
            for t in 0..N_TILES {
                let head = u * N_TILES + t;
                prios[u][t] = self.support.expectation(&fwd.probs[head * nz..(head + 1) * nz]);
            }
        }
        prios
    }
}

impl Scheduler for LearnedScheduler {
    fn schedule(&self, ep: &Episode) -> Schedule {
        let obs = build_scheduler_observation(
            ep.n_uavs(),
            ep.all_window_users(),
            ep.cluster_of(),
            ep.states(),
        );
        select_top_tiles(&self.priorities(&obs.data), ep.slots_per_reschedule())
    }
}

/// Any scheduler the CLI can run.
#[derive(Debug, Clone)]
pub enum PolicyScheduler {
    Ppf(PpfScheduler),
    Learned(LearnedScheduler),
}

impl Scheduler for PolicyScheduler {
    fn schedule(&self, ep: &Episode) -> Schedule {
        match self {
            PolicyScheduler::Ppf(s) => s.schedule(ep),
            PolicyScheduler::Learned(s) => s.schedule(ep),
        }
    }
}

/// Any associator the CLI can run.
#[derive(Debug, Clone)]
pub enum PolicyAssociator {
    Cb(crate::engine::CbAssociator),
    Cf(crate::engine::CfAssociator),
    Centralized(CentralizedPolicy),
    Distributed(DistributedPolicy),
}

impl Associator for PolicyAssociator {
    fn associate(&self, ep: &Episode) -> VirtualCellMap {
        match self {
            PolicyAssociator::Cb(a) => a.associate(ep),
            PolicyAssociator::Cf(a) => a.associate(ep),
            PolicyAssociator::Centralized(a) => a.associate(ep),
            PolicyAssociator::Distributed(a) => a.associate(ep),
        }
    }
}

/// A complete frozen controller: scheduling plus association.
#[derive(Debug, Clone)]
pub struct PolicyBundle {
    pub scheduler: PolicyScheduler,
    pub associator: PolicyAssociator,
}

// ---------------------------------------------------------------------------
// Centralized controller
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct CentralizedController {
    pub agent: Rainbow,
    n_aps: usize,
    n_uavs: usize,
    train_interval: usize,
    slots_seen: usize,
}

impl CentralizedController {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self, AgentError> {
        let n_aps = cfg.deployment.ap_rows * cfg.deployment.ap_cols;
        let n_uavs = cfg.deployment.n_uavs;
        let size = action_space_size(n_aps, n_uavs)?;
        let cap = cfg.agent.action_space_cap as u64;
        if size > cap {
            return Err(AgentError::ActionSpaceTooLarge { size, cap });
        }
        let spec = RainbowSpec::association(
            &cfg.agent,
            global_obs_shape(&cfg.deployment),
            size as usize,
            v_max_association(cfg),
        );
        Ok(Self {
            agent: Rainbow::new(spec, seed, "centralized", 0),
            n_aps,
            n_uavs,
            train_interval: cfg.agent.train_interval,
            slots_seen: 0,
        })
    }

    fn observe_now(&self, ep: &Episode) -> Vec<f64> {
        build_global_observation(
            ep.deployment(),
            ep.schedule(),
            ep.cluster_of(),
            ep.states(),
            ep.grid_resolution(),
        )
        .data
    }

    /// One training episode: greedy-noisy joint actions, P-PF scheduling,
    /// global reward, training every `train_interval` slots.
    pub fn run_training_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError> {
        let mut ep = Episode::new(cfg, seed, episode_idx)?;
        let mut pending: Option<(Vec<f64>, usize, f64)> = None;
        while !ep.done() {
            if ep.needs_schedule() {
                ep.begin_reschedule(PpfScheduler.schedule(&ep));
            }
            let obs = self.observe_now(&ep);
            if let Some((pobs, pact, prew)) = pending.take() {
                self.agent.observe(pobs, pact, prew, &obs);
            }
            let action = self.agent.act_greedy(&obs);
            let choices = decode_joint_action(action as u64, self.n_aps, self.n_uavs)?;
            let out = ep.run_broadcast_slot(&form_virtual_cells(&choices, self.n_uavs))?;
            pending = Some((obs, action, out.reward));
            self.slots_seen += 1;
            if self.slots_seen % self.train_interval == 0 {
                self.agent.train_step();
            }
        }
        if let Some((pobs, pact, prew)) = pending {
            self.agent.observe_terminal(pobs, pact, prew);
        }
        Ok(ep.finish()?)
    }

    pub fn policy(&self) -> CentralizedPolicy {
        CentralizedPolicy {
            net: self.agent.online.clone(),
            support: self.agent.support.clone(),
            n_aps: self.n_aps,
            n_uavs: self.n_uavs,
        }
    }

    pub fn bundle(&self) -> CheckpointBundle {
        CheckpointBundle {
            entries: vec![("association".to_string(), self.agent.params().clone())],
        }
    }
}

// ---------------------------------------------------------------------------
// Distributed controller
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct DistributedController {
    pub agents: Vec<Rainbow>,
    pub federated: bool,
    pub fed_rounds: usize,
    fed_interval: usize,
    n_uavs: usize,
    train_interval: usize,
    slots_seen: usize,
    workers: usize,
}

impl DistributedController {
    pub fn new(cfg: &ExperimentConfig, seed: u64, federated: bool) -> Self {
        let n_aps = cfg.deployment.ap_rows * cfg.deployment.ap_cols;
        let spec = RainbowSpec::association(
            &cfg.agent,
            local_obs_shape(&cfg.deployment),
            cfg.deployment.n_uavs,
            v_max_association(cfg),
        );
        let agents = (0..n_aps)
            .map(|b| Rainbow::new(spec.clone(), seed, "distributed", b as u64))
            .collect();
        Self {
            agents,
            federated,
            fed_rounds: 0,
            fed_interval: cfg.agent.fed_interval,
            n_uavs: cfg.deployment.n_uavs,
            train_interval: cfg.agent.train_interval,
            slots_seen: 0,
            workers: 1,
        }
    }

    /// Fan per-agent gradient steps over this many threads (default 1).
    pub fn set_workers(&mut self, workers: usize) {
        self.workers = workers.max(1);
    }

    fn observe_ap(&self, ep: &Episode, ap: usize) -> Vec<f64> {
        build_local_observation(
            ep.deployment(),
            ap,
            ep.window_users(ap),
            ep.schedule(),
            ep.cluster_of(),
            ep.states(),
            ep.grid_resolution(),
        )
        .data
    }

    /// Train every ready agent one step, then FedAvg on the period boundary.
    fn train_all(&mut self) {
        if !self.agents.iter().all(Rainbow::ready) {
            return;
        }
        let workers = self.workers;
        for_each_agent_parallel(&mut self.agents, workers, |agent| {
            agent.train_step();
        });
        if self.federated && self.agents[0].grad_steps % self.fed_interval == 0 {
            self.federate();
        }
    }

    /// Replace every agent's online parameters with the population mean.
    pub fn federate(&mut self) {
        let sets: Vec<&AgentParams> = self.agents.iter().map(Rainbow::params).collect();
        let mean = fedavg(&sets).expect("all agents share one architecture");
        for agent in &mut self.agents {
            agent.set_params(&mean).expect("all agents share one architecture");
        }
        self.fed_rounds += 1;
    }

    /// One training episode: Boltzmann per-AP actions on local observations,
    /// window-local rewards, P-PF scheduling.
    pub fn run_training_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError> {
        let mut ep = Episode::new(cfg, seed, episode_idx)?;
        let n_aps = self.agents.len();
        let mut pending: Vec<Option<(Vec<f64>, usize, f64)>> = vec![None; n_aps];
        while !ep.done() {
            if ep.needs_schedule() {
                ep.begin_reschedule(PpfScheduler.schedule(&ep));
            }
            let mut choices = Vec::with_capacity(n_aps);
            let mut observations = Vec::with_capacity(n_aps);
            for b in 0..n_aps {
                let obs = self.observe_ap(&ep, b);
                if let Some((pobs, pact, prew)) = pending[b].take() {
                    self.agents[b].observe(pobs, pact, prew, &obs);
                }
                choices.push(self.agents[b].act_boltzmann(&obs));
                observations.push(obs);
            }
            let out = ep.run_broadcast_slot(&form_virtual_cells(&choices, self.n_uavs))?;
            for (b, obs) in observations.into_iter().enumerate() {
                let r = local_reward(ep.window_users(b), &out.per_user_gain);
                pending[b] = Some((obs, choices[b], r));
            }
            self.slots_seen += 1;
            if self.slots_seen % self.train_interval == 0 {
                self.train_all();
            }
        }
        for (b, slot) in pending.into_iter().enumerate() {
            if let Some((pobs, pact, prew)) = slot {
                self.agents[b].observe_terminal(pobs, pact, prew);
            }
        }
        Ok(ep.finish()?)
    }

    pub fn policy(&self) -> DistributedPolicy {
        DistributedPolicy {
            nets: self.agents.iter().map(|a| a.online.clone()).collect(),
            support: self.agents[0].support.clone(),
            n_uavs: self.n_uavs,
        }
    }

    pub fn bundle(&self) -> CheckpointBundle {
        CheckpointBundle {
            entries: self
                .agents
                .iter()
                .enumerate()
                .map(|(b, a)| (format!("ap{b:02}"), a.params().clone()))
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Scheduler meta-agent (semi-MDP options)
// ---------------------------------------------------------------------------

/// One completed option: the scheduler observation at the boundary, the
/// selected (UAV, tile) heads, the option's accumulated global reward, and
/// the observation at the next boundary (`None` at the GOP end).
#[derive(Debug, Clone)]
pub struct OptionTransition {
    pub obs: Vec<f64>,
    pub heads: Vec<usize>,
    pub reward: f64,
    pub gamma_n: f64,
    pub next_obs: Option<Vec<f64>>,
}

/// Distributional meta-agent over per-(UAV, tile) value heads. Each head's
/// expectation is that tile's scheduling priority; the option trains every
/// selected head toward the shared option return (double-Q, hard target
/// sync, prioritized replay).
#[derive(Debug)]
pub struct SchedulerAgent {
    pub online: QNet,
    pub target: QNet,
    pub opt: Adam,
    pub replay: PrioritizedReplay<OptionTransition>,
    pub support: Support,
    spec: RainbowSpec,
    n_uavs: usize,
    /// Discount across one option: γ^(slots per option).
    gamma_option: f64,
    act_rng: CfmbRng,
    train_rng: CfmbRng,
    pub grad_steps: usize,
    pub env_steps: usize,
}

impl SchedulerAgent {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        let n_uavs = cfg.deployment.n_uavs;
        let spec = RainbowSpec::scheduler(
            &cfg.agent,
            scheduler_obs_shape(&cfg.deployment),
            n_uavs * N_TILES,
            v_max_scheduler(cfg),
        );
        let mut init_rng = rng_for(seed, "scheduler-init", 0);
        let online = QNet::new(spec.net.clone(), &mut init_rng);
        let mut target = QNet::new(spec.net.clone(), &mut init_rng);
        target.params.copy_from(&online.params).expect("target mirrors the online layout");
        let opt = Adam::new(&online.params, spec.learning_rate);
        let replay = PrioritizedReplay::new(spec.replay_capacity, spec.per_alpha);
        let support = Support::new(spec.v_min, spec.v_max, spec.net.atoms)
            .expect("scheduler support bounds are validated by the config");
        Self {
            online,
            target,
            opt,
            replay,
            support,
            n_uavs,
            gamma_option: spec.gamma.powi(cfg.time.slots_per_reschedule as i32),
            act_rng: rng_for(seed, "scheduler-act", 0),
            train_rng: rng_for(seed, "scheduler-train", 0),
            spec,
            grad_steps: 0,
            env_steps: 0,
        }
    }

    fn priorities_from(&self, fwd_probs: &[f64]) -> Vec<[f64; N_TILES]> {
        let nz = self.spec.net.atoms;
        let mut prios = vec![[0.0; N_TILES]; self.n_uavs];
        for u in 0..self.n_uavs {
            for t in 0..N_TILES {
                let head = u * N_TILES + t;
                prios[u][t] = self.support.expectation(&fwd_probs[head * nz..(head + 1) * nz]);
            }
        }
        prios
    }

    /// Exploration decision: fresh noise, per-head expectations, top-k per
    /// UAV. Returns the schedule and the selected head indices.
    pub fn act_training(&mut self, obs: &[f64], k: usize) -> (Schedule, Vec<usize>) {
        let noise = self.online.sample_noise(&mut self.act_rng);
        let fwd = self.online.forward(obs, &noise, None).expect("observation matches net");
        let schedule = select_top_tiles(&self.priorities_from(&fwd.probs), k);
        let heads = selected_heads(&schedule);
        (schedule, heads)
    }

    /// Evaluation decision: zero noise.
    pub fn act_eval(&self, obs: &[f64], k: usize) -> Schedule {
        let noise = self.online.zero_noise();
        let fwd = self.online.forward(obs, &noise, None).expect("observation matches net");
        select_top_tiles(&self.priorities_from(&fwd.probs), k)
    }

    /// Record one completed option.
    pub fn observe(
        &mut self,
        obs: Vec<f64>,
        heads: Vec<usize>,
        reward: f64,
        next_obs: Option<&[f64]>,
    ) {
        self.env_steps += 1;
        let gamma_n = if next_obs.is_some() { self.gamma_option } else { 0.0 };
        self.replay.push(OptionTransition {
            obs,
            heads,
            reward,
            gamma_n,
            next_obs: next_obs.map(<[f64]>::to_vec),
        });
    }

    pub fn ready(&self) -> bool {
        self.replay.len() >= self.spec.learn_start.max(self.spec.batch_size)
    }

    fn per_beta(&self) -> f64 {
        let t = (self.grad_steps as f64 / self.spec.per_anneal_steps as f64).min(1.0);
        self.spec.per_beta0 + (1.0 - self.spec.per_beta0) * t
    }

    /// One gradient step over option transitions. Every selected head is
    /// pulled toward the shared projected option return; the bootstrap head
    /// is the online argmax-expectation head evaluated by the target network.
    pub fn train_step(&mut self) -> Option<f64> {
        if !self.ready() {
            return None;
        }
        let batch = self
            .replay
            .sample(self.spec.batch_size, self.per_beta(), &mut self.train_rng)
            .expect("replay non-empty after ready()");
        let noise_select = self.online.sample_noise(&mut self.train_rng);
        let noise_target = self.target.sample_noise(&mut self.train_rng);
        let noise_online = self.online.sample_noise(&mut self.train_rng);
        let nz = self.spec.net.atoms;
        let n_heads = self.spec.net.actions;
        let mut grads = self.online.params.zeros_like();
        let mut grad_logits = vec![0.0; n_heads * nz];
        let mut losses = Vec::with_capacity(batch.indices.len());
        for (j, &idx) in batch.indices.iter().enumerate() {
            let tr = self.replay.get(idx);
            let target_dist = match &tr.next_obs {
                Some(next) => {
                    let sel = self
                        .online
                        .forward(next, &noise_select, None)
                        .expect("stored next observation matches net");
                    let best = argmax_expectation_head(&sel.probs, nz, &self.support);
                    let tgt = self
                        .target
                        .forward(next, &noise_target, None)
                        .expect("stored next observation matches net");
                    let row = &tgt.probs[best * nz..(best + 1) * nz];
                    project_bellman(tr.reward, tr.gamma_n, row, &self.support)
                }
                None => {
                    let uniform = vec![1.0 / nz as f64; nz];
                    project_bellman(tr.reward, 0.0, &uniform, &self.support)
                }
            };
            let fwd = self
                .online
                .forward(&tr.obs, &noise_online, Some(&mut self.train_rng))
                .expect("stored observation matches net");
            grad_logits.fill(0.0);
            let mut loss = 0.0;
            let head_scale =
                batch.weights[j] / (self.spec.batch_size as f64 * tr.heads.len() as f64);
            for &head in &tr.heads {
                let row = &fwd.probs[head * nz..(head + 1) * nz];
                loss += kl_loss(row, &target_dist);
                kl_logit_gradient(
                    row,
                    &target_dist,
                    &mut grad_logits[head * nz..(head + 1) * nz],
                );
                for g in &mut grad_logits[head * nz..(head + 1) * nz] {
                    *g *= head_scale;
                }
            }
            loss /= tr.heads.len() as f64;
            self.online.backward(&tr.obs, &fwd, &noise_online, &grad_logits, &mut grads);
            losses.push(loss);
        }
        for (j, &idx) in batch.indices.iter().enumerate() {
            self.replay.update_priority(idx, losses[j]);
        }
        self.opt.step(&mut self.online.params, &grads);
        self.grad_steps += 1;
        if self.grad_steps % self.spec.target_sync == 0 {
            self.target.params.copy_from(&self.online.params).expect("networks share one layout");
        }
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub fn params(&self) -> &AgentParams {
        &self.online.params
    }
}

/// Head indices (UAV-major) of every scheduled tile.
fn selected_heads(schedule: &Schedule) -> Vec<usize> {
    let mut heads = Vec::new();
    for (u, tiles) in schedule.tiles.iter().enumerate() {
        for &t in tiles {
            heads.push(u * N_TILES + t);
        }
    }
    heads
}

/// Argmax over all heads of the distribution expectation.
fn argmax_expectation_head(probs: &[f64], nz: usize, support: &Support) -> usize {
    let n_heads = probs.len() / nz;
    let mut best = 0;
    let mut best_e = f64::NEG_INFINITY;
    for h in 0..n_heads {
        let e = support.expectation(&probs[h * nz..(h + 1) * nz]);
        if e > best_e {
            best_e = e;
            best = h;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Hierarchical controller
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct HierarchicalController {
    pub scheduler: SchedulerAgent,
    pub assoc: DistributedController,
}

impl HierarchicalController {
    pub fn new(cfg: &ExperimentConfig, seed: u64, federated: bool) -> Result<Self, AgentError> {
        Ok(Self {
            scheduler: SchedulerAgent::new(cfg, seed),
            assoc: DistributedController::new(cfg, seed, federated),
        })
    }

    pub fn set_workers(&mut self, workers: usize) {
        self.assoc.set_workers(workers);
    }

    pub fn fed_rounds(&self) -> usize {
        self.assoc.fed_rounds
    }

    /// One training episode: the scheduler opens every option (re-scheduling
    /// slot) and trains when the previous option's return is known; the
    /// distributed agents act and train inside the option.
    pub fn run_training_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError> {
        let mut ep = Episode::new(cfg, seed, episode_idx)?;
        let n_aps = self.assoc.agents.len();
        let k = ep.slots_per_reschedule();
        let mut pending: Vec<Option<(Vec<f64>, usize, f64)>> = vec![None; n_aps];
        let mut option: Option<(Vec<f64>, Vec<usize>, f64)> = None;
        while !ep.done() {
            if ep.needs_schedule() {
                let sched_obs = build_scheduler_observation(
                    ep.n_uavs(),
                    ep.all_window_users(),
                    ep.cluster_of(),
                    ep.states(),
                );
                if let Some((pobs, pheads, prew)) = option.take() {
                    self.scheduler.observe(pobs, pheads, prew, Some(&sched_obs.data));
                    self.scheduler.train_step();
                }
                let (schedule, heads) = self.scheduler.act_training(&sched_obs.data, k);
                ep.begin_reschedule(schedule);
                option = Some((sched_obs.data, heads, 0.0));
            }
            let mut choices = Vec::with_capacity(n_aps);
            let mut observations = Vec::with_capacity(n_aps);
            for b in 0..n_aps {
                let obs = self.assoc.observe_ap(&ep, b);
                if let Some((pobs, pact, prew)) = pending[b].take() {
                    self.assoc.agents[b].observe(pobs, pact, prew, &obs);
                }
                choices.push(self.assoc.agents[b].act_boltzmann(&obs));
                observations.push(obs);
            }
            let out = ep.run_broadcast_slot(&form_virtual_cells(&choices, ep.n_uavs()))?;
            for (b, obs) in observations.into_iter().enumerate() {
                let r = local_reward(ep.window_users(b), &out.per_user_gain);
                pending[b] = Some((obs, choices[b], r));
            }
            if let Some(opt) = option.as_mut() {
                opt.2 += out.reward;
            }
            self.assoc.slots_seen += 1;
            if self.assoc.slots_seen % self.assoc.train_interval == 0 {
                self.assoc.train_all();
            }
        }
        if let Some((pobs, pheads, prew)) = option {
            self.scheduler.observe(pobs, pheads, prew, None);
            self.scheduler.train_step();
        }
        for (b, slot) in pending.into_iter().enumerate() {
            if let Some((pobs, pact, prew)) = slot {
                self.assoc.agents[b].observe_terminal(pobs, pact, prew);
            }
        }
        Ok(ep.finish()?)
    }

    pub fn scheduler_policy(&self) -> LearnedScheduler {
        LearnedScheduler {
            net: self.scheduler.online.clone(),
            support: self.scheduler.support.clone(),
            n_uavs: self.scheduler.n_uavs,
        }
    }

    pub fn policy(&self) -> (LearnedScheduler, DistributedPolicy) {
        (self.scheduler_policy(), self.assoc.policy())
    }

    pub fn bundle(&self) -> CheckpointBundle {
        let mut entries =
            vec![("scheduler".to_string(), self.scheduler.params().clone())];
        entries.extend(self.assoc.bundle().entries);
        CheckpointBundle { entries }
    }
}

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

/// One per-slot, per-AP record for offline embedding analysis.
#[derive(Debug, Clone)]
pub struct EmbeddingRecord {
    pub slot: usize,
    pub ap: usize,
    pub observation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub action: usize,
}

/// Replay one greedy episode of a distributed policy under `scheduler`,
/// dumping every agent's (observation, hidden embedding, action) triple per
/// slot.
pub fn export_embeddings<S: Scheduler + ?Sized>(
    cfg: &ExperimentConfig,
    scheduler: &S,
    policy: &DistributedPolicy,
    seed: u64,
    episode_idx: u64,
) -> Result<Vec<EmbeddingRecord>, AgentError> {
    let mut ep = Episode::new(cfg, seed, episode_idx)?;
    let n_aps = ep.n_aps();
    let mut records = Vec::new();
    while !ep.done() {
        if ep.needs_schedule() {
            ep.begin_reschedule(scheduler.schedule(&ep));
        }
        let mut choices = Vec::with_capacity(n_aps);
        for b in 0..n_aps {
            let obs = build_local_observation(
                ep.deployment(),
                b,
                ep.window_users(b),
                ep.schedule(),
                ep.cluster_of(),
                ep.states(),
                ep.grid_resolution(),
            );
            let (hidden, action) = policy.eval_forward(b, &obs.data);
            records.push(EmbeddingRecord {
                slot: ep.global_slot(),
                ap: b,
                observation: obs.data,
                hidden,
                action,
            });
            choices.push(action);
        }
        let assoc = form_virtual_cells(&choices, ep.n_uavs());
        ep.run_broadcast_slot(&assoc)?;
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
