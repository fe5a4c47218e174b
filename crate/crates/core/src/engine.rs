//! GOP episode engine.
//!
//! An [`Episode`] wires one group-of-pictures' worth of broadcasting together:
//! a fresh deployment, per-slot fading, per-user decode state, the P-PF
//! service history, and the frame/re-schedule/slot clocks. Controllers step it
//! slot by slot — a [`Scheduler`] picks each UAV's tile queue at every
//! re-scheduling boundary and an [`Associator`] picks the AP→UAV map for every
//! broadcast slot — and the episode accounts rewards and per-frame V-PSNR.
//!
//! [`run_gop_episode`] drives one full episode with a scheduler/associator
//! pair; [`evaluate`] aggregates many independent episodes into a mean/spread
//! summary, deterministically regardless of worker count.

use crate::association::{cb_decide, cf_decide, form_virtual_cells, VirtualCellMap};
use crate::channel::{realize_channels, ChannelParams};
use crate::config::ExperimentConfig;
use crate::deployment::{DeployError, Deployment};
use crate::phy::{downlink_sinr, slot_capacity, tile_success, uplink_sinr, PhyError};
use crate::rng::{rng_for, CfmbRng};
use crate::scheduling::{all_priorities, ppf_priority, select_top_tiles, PpfHistory, Schedule};
use crate::video::{
    fov_to_tiles, frame_kind, generate_viewpoint, normalized_gop_score, DecodeState,
    PayloadTable, VideoError,
};
use thiserror::Error;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("deployment: {0}")]
    Deploy(#[from] DeployError),
    #[error("physical layer: {0}")]
    Phy(#[from] PhyError),
    #[error("video pipeline: {0}")]
    Video(#[from] VideoError),
    #[error("broadcast slot stepped before a schedule was set")]
    MissingSchedule,
    #[error("association map covers {got} APs, deployment has {want}")]
    WrongAssociation { got: usize, want: usize },
}

// ---------------------------------------------------------------------------
// Control traits
// ---------------------------------------------------------------------------

/// Chooses each UAV's tile queue for the next re-scheduling window.
/// Called exactly once per re-scheduling slot.
pub trait Scheduler: Sync {
    fn schedule(&self, ep: &Episode) -> Schedule;
}

/// Chooses the AP→UAV association for the next broadcast slot.
/// Called exactly once per broadcast slot.
pub trait Associator: Sync {
    fn associate(&self, ep: &Episode) -> VirtualCellMap;
}

// ---------------------------------------------------------------------------
// Episode
// ---------------------------------------------------------------------------

/// Outcome of one broadcast slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    /// Sum of all users' V-PSNR gains this slot.
    pub reward: f64,
    /// Per-user V-PSNR gain this slot (zero for users that decoded nothing).
    pub per_user_gain: Vec<f64>,
}

/// One GOP of broadcasting: environment state plus the slot clocks.
#[derive(Debug, Clone)]
pub struct Episode {
    deployment: Deployment,
    channel_params: ChannelParams,
    payloads: PayloadTable,
    cluster_of: Vec<usize>,
    states: Vec<DecodeState>,
    history: PpfHistory,
    schedule: Schedule,
    /// Cached per-AP window membership (static for the episode).
    window_users: Vec<Vec<usize>>,
    fading_rng: CfmbRng,
    slot_seconds: f64,
    grid_resolution: f64,
    coherent_mrc: bool,
    force_success: bool,
    frames_per_gop: usize,
    reschedules_per_frame: usize,
    slots_per_reschedule: usize,
    frame: usize,
    reschedule: usize,
    slot_in_reschedule: usize,
    global_slot: usize,
    needs_schedule: bool,
    per_frame_vpsnr: Vec<f64>,
    slot_rewards: Vec<f64>,
    final_decoded: Vec<usize>,
    total_reward: f64,
    schedule_calls: usize,
    assoc_calls: usize,
}

impl Episode {
    /// Build episode `episode_idx` of the experiment rooted at `root_seed`.
    /// Deployment, viewpoints, and fading each consume an independent seeded
    /// stream, so episodes are reproducible and mutually independent.
    pub fn new(
        cfg: &ExperimentConfig,
        root_seed: u64,
        episode_idx: u64,
    ) -> Result<Self, EngineError> {
        let mut deploy_rng = rng_for(root_seed, "deploy", episode_idx);
        let deployment = Deployment::generate(&cfg.deployment, &mut deploy_rng)?;
        let channel_params = ChannelParams::from_config(&cfg.channel);
        let payloads = PayloadTable::from_experiment(cfg);
        let cluster_of: Vec<usize> = deployment.users.iter().map(|u| u.cluster).collect();

        let mut vp_rng = rng_for(root_seed, "viewpoint", episode_idx);
        let states: Vec<DecodeState> = cluster_of
            .iter()
            .map(|&c| {
                let vp = generate_viewpoint(&mut vp_rng, cfg.video.pitch_band_deg);
                DecodeState::new(&fov_to_tiles(&vp, c))
            })
            .collect();

        let window_users =
            (0..deployment.aps.len()).map(|b| deployment.window_users(b)).collect();
        let n_uavs = deployment.uavs.len();

        Ok(Self {
            deployment,
            channel_params,
            payloads,
            cluster_of,
            states,
            history: PpfHistory::new(n_uavs),
            schedule: Schedule { tiles: Vec::new() },
            window_users,
            fading_rng: rng_for(root_seed, "fading", episode_idx),
            slot_seconds: cfg.slot_seconds(),
            grid_resolution: cfg.deployment.grid_resolution,
            coherent_mrc: cfg.phy.coherent_mrc,
            force_success: cfg.engine.force_success,
            frames_per_gop: cfg.time.frames_per_gop,
            reschedules_per_frame: cfg.time.reschedules_per_frame,
            slots_per_reschedule: cfg.time.slots_per_reschedule,
            frame: 0,
            reschedule: 0,
            slot_in_reschedule: 0,
            global_slot: 0,
            needs_schedule: true,
            per_frame_vpsnr: Vec::with_capacity(cfg.time.frames_per_gop),
            slot_rewards: Vec::new(),
            final_decoded: Vec::new(),
            total_reward: 0.0,
            schedule_calls: 0,
            assoc_calls: 0,
        })
    }

    // ---- read access for controllers and observation builders ----

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    pub fn states(&self) -> &[DecodeState] {
        &self.states
    }

    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn history(&self) -> &PpfHistory {
        &self.history
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Users inside AP `b`'s observation window (cached once per episode).
    pub fn window_users(&self, ap: usize) -> &[usize] {
        &self.window_users[ap]
    }

    /// Window membership of every AP at once.
    pub fn all_window_users(&self) -> &[Vec<usize>] {
        &self.window_users
    }

    pub fn n_uavs(&self) -> usize {
        self.deployment.uavs.len()
    }

    pub fn n_aps(&self) -> usize {
        self.deployment.aps.len()
    }

    pub fn n_users(&self) -> usize {
        self.states.len()
    }

    pub fn grid_resolution(&self) -> f64 {
        self.grid_resolution
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn reschedule_idx(&self) -> usize {
        self.reschedule
    }

    pub fn slot_in_reschedule(&self) -> usize {
        self.slot_in_reschedule
    }

    pub fn global_slot(&self) -> usize {
        self.global_slot
    }

    pub fn slots_per_reschedule(&self) -> usize {
        self.slots_per_reschedule
    }

    pub fn frames_per_gop(&self) -> usize {
        self.frames_per_gop
    }

    pub fn per_frame_vpsnr(&self) -> &[f64] {
        &self.per_frame_vpsnr
    }

    /// Whether the next step needs [`Episode::begin_reschedule`] first.
    pub fn needs_schedule(&self) -> bool {
        self.needs_schedule
    }

    /// All frames of the GOP have been broadcast.
    pub fn done(&self) -> bool {
        self.frame >= self.frames_per_gop
    }

    /// The flat tile index each UAV transmits in the upcoming slot.
    pub fn current_tiles(&self) -> Vec<usize> {
        debug_assert!(!self.needs_schedule, "schedule not set");
        (0..self.n_uavs()).map(|u| self.schedule.tile_for(u, self.slot_in_reschedule)).collect()
    }

    // ---- stepping ----

    /// Install the tile queues for the next re-scheduling window.
    pub fn begin_reschedule(&mut self, schedule: Schedule) {
        debug_assert!(self.needs_schedule, "re-schedule outside a boundary");
        debug_assert_eq!(schedule.n_uavs(), self.n_uavs());
        self.schedule = schedule;
        self.needs_schedule = false;
        self.schedule_calls += 1;
    }

    /// Broadcast one slot under `assoc`: every UAV relays its scheduled tile
    /// through its virtual cell, pending requesters decode when both hops
    /// carry the payload, and the slot reward is the total V-PSNR gain.
    pub fn run_broadcast_slot(&mut self, assoc: &VirtualCellMap) -> Result<SlotOutcome, EngineError> {
        if self.done() || self.needs_schedule {
            return Err(EngineError::MissingSchedule);
        }
        if assoc.choices.len() != self.n_aps() || assoc.groups.len() != self.n_uavs() {
            return Err(EngineError::WrongAssociation {
                got: assoc.choices.len(),
                want: self.n_aps(),
            });
        }
        self.assoc_calls += 1;

        let uav_tiles = self.current_tiles();
        let payload = self.payloads.bits(frame_kind(self.frame));
        let n_uavs = self.n_uavs();
        let mut per_user_gain = vec![0.0; self.n_users()];
        let mut reward = 0.0;

        if self.force_success {
            // Calibration mode: every scheduled tile reaches every pending
            // requester, regardless of the association.
            for (u, &tile) in uav_tiles.iter().enumerate() {
                for v in 0..self.states.len() {
                    if self.cluster_of[v] == u && self.states[v].pending(tile) {
                        let before = self.states[v].vpsnr_now();
                        self.states[v].update(tile, true, self.frame)?;
                        let gain = self.states[v].vpsnr_now() - before;
                        per_user_gain[v] += gain;
                        reward += gain;
                    }
                }
            }
        } else {
            let channels =
                realize_channels(&self.deployment, &self.channel_params, &mut self.fading_rng);
            // Every UAV transmits on the shared uplink band each slot, so all
            // of them interfere whether or not any AP listens to them.
            let active: Vec<usize> = (0..n_uavs).collect();
            for (u, &tile) in uav_tiles.iter().enumerate() {
                let group = assoc.group(u);
                if group.is_empty() {
                    // No AP decodes this UAV: its tile reaches nobody.
                    continue;
                }
                let ul = uplink_sinr(u, group, &active, &channels, &self.channel_params, self.coherent_mrc)?;
                let ul_bits = slot_capacity(ul, self.channel_params.b_ul, self.slot_seconds);
                for v in 0..self.states.len() {
                    if self.cluster_of[v] != u || !self.states[v].pending(tile) {
                        continue;
                    }
                    let dl =
                        downlink_sinr(group, v, &assoc.groups, &channels, &self.channel_params)?;
                    let dl_bits = slot_capacity(dl, self.channel_params.b_dl, self.slot_seconds);
                    if tile_success(ul_bits, dl_bits, payload) {
                        let before = self.states[v].vpsnr_now();
                        self.states[v].update(tile, true, self.frame)?;
                        let gain = self.states[v].vpsnr_now() - before;
                        per_user_gain[v] += gain;
                        reward += gain;
                    }
                }
            }
        }

        self.total_reward += reward;
        self.slot_rewards.push(reward);
        self.advance_clock();
        Ok(SlotOutcome { reward, per_user_gain })
    }

    /// Advance slot/re-schedule/frame counters after a broadcast slot.
    fn advance_clock(&mut self) {
        self.global_slot += 1;
        self.slot_in_reschedule += 1;
        if self.slot_in_reschedule < self.slots_per_reschedule {
            return;
        }
        // Re-scheduling boundary: bank the P-PF service history first, while
        // the frame context the slots ran under is still current.
        self.history.record_slot_end(&self.cluster_of, &self.states);
        self.slot_in_reschedule = 0;
        self.reschedule += 1;
        self.needs_schedule = true;
        if self.reschedule < self.reschedules_per_frame {
            return;
        }
        // Frame boundary: score the frame, then freeze decodes into the
        // dependency set of the next one.
        let mean = self.states.iter().map(|s| s.vpsnr_now()).sum::<f64>()
            / self.states.len() as f64;
        self.per_frame_vpsnr.push(mean);
        if self.frame + 1 == self.frames_per_gop {
            self.final_decoded = self.states.iter().map(|s| s.decoded_count()).collect();
        }
        for s in &mut self.states {
            s.advance_frame();
        }
        self.reschedule = 0;
        self.frame += 1;
        if self.done() {
            self.needs_schedule = false;
        }
    }

    /// Collapse a finished episode into its result record.
    pub fn finish(self) -> Result<EpisodeResult, EngineError> {
        let score = normalized_gop_score(&self.per_frame_vpsnr, self.frames_per_gop)?;
        Ok(EpisodeResult {
            score,
            per_frame_vpsnr: self.per_frame_vpsnr,
            slot_rewards: self.slot_rewards,
            final_decoded: self.final_decoded,
            total_reward: self.total_reward,
            slots: self.global_slot,
            schedule_calls: self.schedule_calls,
            assoc_calls: self.assoc_calls,
        })
    }
}

/// Summary of one finished episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    /// Normalized GOP score in [0, frames]: Σ_frames (user-mean V-PSNR / cap).
    pub score: f64,
    /// User-mean V-PSNR at the end of each frame.
    pub per_frame_vpsnr: Vec<f64>,
    /// Global reward of every broadcast slot, in order.
    pub slot_rewards: Vec<f64>,
    /// Per-user decoded-tile count in the GOP's last frame.
    pub final_decoded: Vec<usize>,
    /// Sum of all slot rewards.
    pub total_reward: f64,
    /// Broadcast slots executed.
    pub slots: usize,
    /// How many times a scheduler decision was installed.
    pub schedule_calls: usize,
    /// How many association decisions were consumed.
    pub assoc_calls: usize,
}

// ---------------------------------------------------------------------------
// Baseline controllers
// ---------------------------------------------------------------------------

/// Popularity-based proportional-fair tile scheduling.
#[derive(Debug, Clone, Copy, Default)]
pub struct PpfScheduler;

impl Scheduler for PpfScheduler {
    fn schedule(&self, ep: &Episode) -> Schedule {
        let prios = all_priorities(ep.n_uavs(), ep.cluster_of(), ep.states(), ep.history());
        select_top_tiles(&prios, ep.slots_per_reschedule())
    }
}

/// Cell-based association: each AP independently serves the UAV whose current
/// tile has the most requesters inside the AP's observation window.
#[derive(Debug, Clone, Copy, Default)]
pub struct CbAssociator;

impl Associator for CbAssociator {
    fn associate(&self, ep: &Episode) -> VirtualCellMap {
        let tiles = ep.current_tiles();
        let choices: Vec<usize> = (0..ep.n_aps())
            .map(|b| cb_decide(ep.window_users(b), &tiles, ep.cluster_of(), ep.states()))
            .collect();
        form_virtual_cells(&choices, ep.n_uavs())
    }
}

/// Cell-free association: all APs jointly serve the UAV whose current tile
/// carries the highest P-PF priority.
#[derive(Debug, Clone, Copy, Default)]
pub struct CfAssociator;

impl Associator for CfAssociator {
    fn associate(&self, ep: &Episode) -> VirtualCellMap {
        let tiles = ep.current_tiles();
        let prios: Vec<f64> = tiles
            .iter()
            .enumerate()
            .map(|(u, &t)| ppf_priority(u, t, ep.cluster_of(), ep.states(), ep.history()))
            .collect();
        cf_decide(&prios, ep.n_aps())
    }
}

// ---------------------------------------------------------------------------
// Episode drivers
// ---------------------------------------------------------------------------

/// Run one full re-scheduling slot: a single scheduler decision followed by
/// `slots_per_reschedule` broadcast slots, each with a fresh association.
/// Returns the per-slot rewards of the window.
pub fn run_reschedule_slot<S, A>(
    ep: &mut Episode,
    scheduler: &S,
    associator: &A,
) -> Result<Vec<f64>, EngineError>
where
    S: Scheduler + ?Sized,
    A: Associator + ?Sized,
{
    if !ep.needs_schedule() || ep.done() {
        return Err(EngineError::MissingSchedule);
    }
    let s = scheduler.schedule(ep);
    ep.begin_reschedule(s);
    let mut rewards = Vec::with_capacity(ep.slots_per_reschedule());
    for _ in 0..ep.slots_per_reschedule() {
        let assoc = associator.associate(ep);
        rewards.push(ep.run_broadcast_slot(&assoc)?.reward);
    }
    Ok(rewards)
}

/// Run one full GOP episode under a scheduler/associator pair.
pub fn run_gop_episode<S, A>(
    cfg: &ExperimentConfig,
    scheduler: &S,
    associator: &A,
    root_seed: u64,
    episode_idx: u64,
) -> Result<EpisodeResult, EngineError>
where
    S: Scheduler + ?Sized,
    A: Associator + ?Sized,
{
    let mut ep = Episode::new(cfg, root_seed, episode_idx)?;
    while !ep.done() {
        run_reschedule_slot(&mut ep, scheduler, associator)?;
    }
    ep.finish()
}

/// Mean and spread of per-episode scores.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub mean: f64,
    /// Sample standard deviation (n−1 denominator); 0 when n < 2.
    pub std_dev: f64,
    pub scores: Vec<f64>,
}

impl EvalSummary {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len();
        let mean = if n == 0 { 0.0 } else { scores.iter().sum::<f64>() / n as f64 };
        let std_dev = if n < 2 {
            0.0
        } else {
            let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        Self { mean, std_dev, scores }
    }
}

/// Run episodes `first_episode..first_episode + n` and keep every result, in
/// episode order.
///
/// Episodes derive their randomness from their own index, so the result is
/// byte-identical for any `workers` count. Training and held-out evaluation
/// stay disjoint by using non-overlapping episode-index ranges.
pub fn collect_episodes<S, A>(
    cfg: &ExperimentConfig,
    scheduler: &S,
    associator: &A,
    root_seed: u64,
    first_episode: u64,
    n_episodes: usize,
    workers: usize,
) -> Result<Vec<EpisodeResult>, EngineError>
where
    S: Scheduler + ?Sized,
    A: Associator + ?Sized,
{
    let workers = workers.max(1).min(n_episodes.max(1));
    if workers <= 1 {
        return (0..n_episodes)
            .map(|i| run_gop_episode(cfg, scheduler, associator, root_seed, first_episode + i as u64))
            .collect();
    }
    let results = std::sync::Mutex::new(
        (0..n_episodes).map(|_| None).collect::<Vec<Option<Result<EpisodeResult, EngineError>>>>(),
    );
    std::thread::scope(|scope| {
        for w in 0..workers {
            let results = &results;
            scope.spawn(move || {
                for i in (w..n_episodes).step_by(workers) {
                    let r = run_gop_episode(
                        cfg,
                        scheduler,
                        associator,
                        root_seed,
                        first_episode + i as u64,
                    );
                    results.lock().expect("poisoned eval results")[i] = Some(r);
                }
            });
        }
    });
    let results = results.into_inner().expect("poisoned eval results");
    results.into_iter().map(|r| r.expect("every episode index was visited")).collect()
}

/// Evaluate a policy pair over episodes `first_episode..first_episode + n`,
/// reducing to the score summary. See [`collect_episodes`] for determinism.
pub fn evaluate<S, A>(
    cfg: &ExperimentConfig,
    scheduler: &S,
    associator: &A,
    root_seed: u64,
    first_episode: u64,
    n_episodes: usize,
    workers: usize,
) -> Result<EvalSummary, EngineError>
where
    S: Scheduler + ?Sized,
    A: Associator + ?Sized,
{
    let results =
        collect_episodes(cfg, scheduler, associator, root_seed, first_episode, n_episodes, workers)?;
    Ok(EvalSummary::from_scores(results.into_iter().map(|r| r.score).collect()))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::video::vpsnr_cap;

    /// A small-but-real configuration that keeps test episodes fast.
    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.deployment.n_users = 24;
        cfg
    }

    #[test]
    fn episode_walks_the_whole_slot_grid() {
        let cfg = small_cfg();
        let res = run_gop_episode(&cfg, &PpfScheduler, &CbAssociator, 7, 0).unwrap();
        let expected_slots = cfg.time.frames_per_gop
            * cfg.time.reschedules_per_frame
            * cfg.time.slots_per_reschedule;
        assert_eq!(res.slots, expected_slots);
        assert_eq!(res.slots, 1400);
        assert_eq!(
            res.schedule_calls,
            cfg.time.frames_per_gop * cfg.time.reschedules_per_frame
        );
        assert_eq!(res.assoc_calls, expected_slots);
        assert_eq!(res.per_frame_vpsnr.len(), cfg.time.frames_per_gop);
        assert!(res.score >= 0.0 && res.score <= cfg.time.frames_per_gop as f64);
    }

    #[test]
    fn forced_success_saturates_the_gop_score() {
        let mut cfg = small_cfg();
        cfg.engine.force_success = true;
        let res = run_gop_episode(&cfg, &PpfScheduler, &CfAssociator, 3, 0).unwrap();
        // Every frame ends fully decoded for every user, so each frame
        // contributes exactly its cap.
        for &v in &res.per_frame_vpsnr {
            assert!((v - vpsnr_cap()).abs() < 1e-9, "frame mean {v}");
        }
        assert!((res.score - cfg.time.frames_per_gop as f64).abs() < 1e-9, "score {}", res.score);
    }

    #[test]
    fn reschedule_slot_runs_one_schedule_and_all_inner_slots() {
        let cfg = small_cfg();
        let mut ep = Episode::new(&cfg, 13, 0).unwrap();
        let rewards = run_reschedule_slot(&mut ep, &PpfScheduler, &CbAssociator).unwrap();
        assert_eq!(rewards.len(), cfg.time.slots_per_reschedule);
        assert_eq!(ep.global_slot(), cfg.time.slots_per_reschedule);
        // One scheduler decision serves the whole window.
        assert_eq!(ep.reschedule_idx(), 1);
        assert!(ep.needs_schedule());
        // Calling it off-boundary is rejected.
        ep.begin_reschedule(PpfScheduler.schedule(&ep));
        assert!(matches!(
            run_reschedule_slot(&mut ep, &PpfScheduler, &CbAssociator),
            Err(EngineError::MissingSchedule)
        ));
    }

    #[test]
    fn zero_transmit_power_delivers_nothing() {
        let mut cfg = small_cfg();
        cfg.channel.uav_eirp_dbm = -300.0;
        cfg.channel.ap_eirp_dbm = -300.0;
        let res = run_gop_episode(&cfg, &PpfScheduler, &CfAssociator, 2, 0).unwrap();
        assert_eq!(res.total_reward, 0.0);
        assert!(res.per_frame_vpsnr.iter().all(|&v| v == 0.0));
        assert!(res.final_decoded.iter().all(|&d| d == 0));
        assert_eq!(res.score, 0.0);
    }

    #[test]
    fn result_trace_is_self_consistent() {
        let cfg = small_cfg();
        let res = run_gop_episode(&cfg, &PpfScheduler, &CbAssociator, 17, 0).unwrap();
        assert_eq!(res.slot_rewards.len(), res.slots);
        let trace_sum: f64 = res.slot_rewards.iter().sum();
        assert!((trace_sum - res.total_reward).abs() <= 1e-9 * res.total_reward.abs().max(1.0));
        assert_eq!(res.final_decoded.len(), cfg.deployment.n_users);
        let score = crate::video::normalized_gop_score(
            &res.per_frame_vpsnr,
            cfg.time.frames_per_gop,
        )
        .unwrap();
        assert_eq!(score.to_bits(), res.score.to_bits());
    }

    #[test]
    fn slot_rewards_telescope_to_frame_quality_sums() {
        // Each frame starts at 0 dB for every user, so summed slot gains must
        // equal n_users · Σ per-frame mean V-PSNR.
        let cfg = small_cfg();
        let res = run_gop_episode(&cfg, &PpfScheduler, &CbAssociator, 11, 2).unwrap();
        let frame_sum: f64 = res.per_frame_vpsnr.iter().sum::<f64>() * cfg.deployment.n_users as f64;
        assert!(
            (res.total_reward - frame_sum).abs() <= 1e-9 * frame_sum.abs().max(1.0),
            "reward {} vs frame sum {}",
            res.total_reward,
            frame_sum
        );
    }

    #[test]
    fn episodes_are_bit_deterministic() {
        let cfg = small_cfg();
        let a = run_gop_episode(&cfg, &PpfScheduler, &CfAssociator, 42, 5).unwrap();
        let b = run_gop_episode(&cfg, &PpfScheduler, &CfAssociator, 42, 5).unwrap();
        assert_eq!(a.score.to_bits(), b.score.to_bits());
        for (x, y) in a.per_frame_vpsnr.iter().zip(&b.per_frame_vpsnr) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = run_gop_episode(&cfg, &PpfScheduler, &CfAssociator, 42, 6).unwrap();
        assert_ne!(a.score.to_bits(), c.score.to_bits(), "episodes should differ across indices");
    }

    #[test]
    fn manual_stepping_matches_the_driver_and_decodes_monotonically() {
        let cfg = small_cfg();
        let mut ep = Episode::new(&cfg, 9, 1).unwrap();
        let mut last_counts = vec![0usize; ep.n_users()];
        let mut frame = 0usize;
        while !ep.done() {
            if ep.needs_schedule() {
                let s = PpfScheduler.schedule(&ep);
                ep.begin_reschedule(s);
            }
            let a = CbAssociator.associate(&ep);
            ep.run_broadcast_slot(&a).unwrap();
            if ep.frame() != frame {
                // Frame advanced: decode counters reset.
                frame = ep.frame();
                last_counts.fill(0);
            }
            for (v, st) in ep.states().iter().enumerate() {
                assert!(st.decoded_count() >= last_counts[v], "decode count regressed");
                last_counts[v] = st.decoded_count();
            }
        }
        let reference = run_gop_episode(&cfg, &PpfScheduler, &CbAssociator, 9, 1).unwrap();
        let manual = ep.finish().unwrap();
        assert_eq!(manual.score.to_bits(), reference.score.to_bits());
    }

    #[test]
    fn unserved_virtual_cells_deliver_nothing() {
        let cfg = small_cfg();
        let mut ep = Episode::new(&cfg, 21, 0).unwrap();
        let s = PpfScheduler.schedule(&ep);
        ep.begin_reschedule(s);
        // Point every AP at UAV 0: other clusters' users must stay at zero.
        let assoc = form_virtual_cells(&vec![0; ep.n_aps()], ep.n_uavs());
        ep.run_broadcast_slot(&assoc).unwrap();
        for (v, st) in ep.states().iter().enumerate() {
            if ep.cluster_of()[v] != 0 {
                assert_eq!(st.decoded_count(), 0, "user {v} decoded without a serving cell");
            }
        }
    }

    #[test]
    fn stepping_without_a_schedule_is_an_error() {
        let cfg = small_cfg();
        let mut ep = Episode::new(&cfg, 1, 0).unwrap();
        let assoc = form_virtual_cells(&vec![0; ep.n_aps()], ep.n_uavs());
        assert!(matches!(ep.run_broadcast_slot(&assoc), Err(EngineError::MissingSchedule)));
    }

    #[test]
    fn evaluation_is_worker_count_independent() {
        let mut cfg = small_cfg();
        cfg.deployment.n_users = 16;
        let serial =
            evaluate(&cfg, &PpfScheduler, &CfAssociator, 5, 100, 6, 1).unwrap();
        let parallel =
            evaluate(&cfg, &PpfScheduler, &CfAssociator, 5, 100, 6, 3).unwrap();
        assert_eq!(serial.mean.to_bits(), parallel.mean.to_bits());
        assert_eq!(serial.std_dev.to_bits(), parallel.std_dev.to_bits());
        for (a, b) in serial.scores.iter().zip(&parallel.scores) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(serial.std_dev >= 0.0);
    }

    #[test]
    fn evaluation_statistics_match_a_hand_computation() {
        let summary = EvalSummary::from_scores(vec![1.0, 2.0, 4.0]);
        assert!((summary.mean - 7.0 / 3.0).abs() < 1e-12);
        // Sample variance of {1,2,4}: ((16 + 1 + 25)/9) / 2 = 7/3.
        let expected = (7.0f64 / 3.0).sqrt();
        assert!((summary.std_dev - expected).abs() < 1e-12, "sd {}", summary.std_dev);
        let single = EvalSummary::from_scores(vec![3.0]);
        assert_eq!(single.std_dev, 0.0);
    }
}
