//! The training driver: epochs of training episodes, periodic held-out
//! evaluation of the frozen policy, learning-curve capture, and best-so-far
//! checkpoint retention.

use crate::agents::controllers::{
    AgentError, CentralizedController, CheckpointBundle, DistributedController,
    HierarchicalController, PolicyAssociator, PolicyBundle, PolicyScheduler,
};
use crate::config::ExperimentConfig;
use crate::engine::{evaluate, EpisodeResult, EvalSummary, PpfScheduler};

// ---------------------------------------------------------------------------
// Controller abstraction
// ---------------------------------------------------------------------------

/// Episode index where held-out evaluation episodes start. Training uses
/// indices `0..epochs`, so the two sets never overlap.
pub const EVAL_OFFSET: u64 = 1 << 32;

/// What the training driver needs from any of the three controllers.
pub trait Controller {
    /// Run one training episode (experience collection plus gradient steps).
    fn train_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError>;

    /// Freeze the current parameters into an evaluation policy.
    fn policy_bundle(&self) -> PolicyBundle;

    /// Snapshot the current parameters for checkpointing.
    fn checkpoint(&self) -> CheckpointBundle;

    /// Completed federated-averaging rounds (0 for non-federated setups).
    fn fed_rounds(&self) -> usize;

    /// Fan internal per-agent work over this many threads.
    fn set_workers(&mut self, _workers: usize) {}
}

impl Controller for CentralizedController {
    fn train_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError> {
        self.run_training_episode(cfg, seed, episode_idx)
    }

    fn policy_bundle(&self) -> PolicyBundle {
        PolicyBundle {
            scheduler: PolicyScheduler::Ppf(PpfScheduler),
            associator: PolicyAssociator::Centralized(self.policy()),
        }
    }

    fn checkpoint(&self) -> CheckpointBundle {
        self.bundle()
    }

    fn fed_rounds(&self) -> usize {
        0
    }
}

impl Controller for DistributedController {
    fn train_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError> {
        self.run_training_episode(cfg, seed, episode_idx)
    }

    fn policy_bundle(&self) -> PolicyBundle {
        PolicyBundle {
            scheduler: PolicyScheduler::Ppf(PpfScheduler),
            associator: PolicyAssociator::Distributed(self.policy()),
        }
    }

    fn checkpoint(&self) -> CheckpointBundle {
        self.bundle()
    }

    fn fed_rounds(&self) -> usize {
        self.fed_rounds
    }

    fn set_workers(&mut self, workers: usize) {
        DistributedController::set_workers(self, workers);
    }
}

impl Controller for HierarchicalController {
    fn train_episode(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        episode_idx: u64,
    ) -> Result<EpisodeResult, AgentError> {
        self.run_training_episode(cfg, seed, episode_idx)
    }

    fn policy_bundle(&self) -> PolicyBundle {
        let (scheduler, associator) = self.policy();
        PolicyBundle {
            scheduler: PolicyScheduler::Learned(scheduler),
            associator: PolicyAssociator::Distributed(associator),
        }
    }

    fn checkpoint(&self) -> CheckpointBundle {
        self.bundle()
    }

    fn fed_rounds(&self) -> usize {
        self.assoc.fed_rounds
    }

    fn set_workers(&mut self, workers: usize) {
        HierarchicalController::set_workers(self, workers);
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// One learning-curve point: held-out evaluation after `epoch` episodes.
#[derive(Debug, Clone)]
pub struct TrainPoint {
    pub epoch: usize,
    pub summary: EvalSummary,
}

/// Everything a finished training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Held-out evaluation at epoch 0, every eval interval, and the end.
    pub curve: Vec<TrainPoint>,
    /// Epoch whose evaluation scored the highest mean.
    pub best_epoch: usize,
    pub best_mean: f64,
    /// Parameters at the best epoch.
    pub best: CheckpointBundle,
    /// Parameters at the final epoch.
    pub final_bundle: CheckpointBundle,
    pub fed_rounds: usize,
}

/// Observer of evaluation points as they happen (e.g. streaming a learning
/// curve to disk). The default sink discards them.
pub trait TrainSink {
    fn on_eval(
        &mut self,
        epoch: usize,
        summary: &EvalSummary,
        bundle: &CheckpointBundle,
    ) -> Result<(), AgentError>;
}

/// Sink that ignores every event.
pub struct NullSink;

impl TrainSink for NullSink {
    fn on_eval(
        &mut self,
        _epoch: usize,
        _summary: &EvalSummary,
        _bundle: &CheckpointBundle,
    ) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Train `ctrl` for `cfg.train.epochs` episodes (indices `0..epochs` under
/// `seed`), evaluating the frozen policy on `cfg.train.eval_episodes`
/// held-out episodes at epoch 0, every `cfg.train.eval_interval` epochs, and
/// after the final epoch. Keeps the best-scoring checkpoint.
pub fn train<C: Controller + ?Sized, S: TrainSink + ?Sized>(
    cfg: &ExperimentConfig,
    ctrl: &mut C,
    seed: u64,
    workers: usize,
    sink: &mut S,
) -> Result<TrainOutcome, AgentError> {
    let epochs = cfg.train.epochs;
    let interval = cfg.train.eval_interval.max(1);
    ctrl.set_workers(workers);

    let mut curve = Vec::new();
    let mut best: Option<(usize, f64, CheckpointBundle)> = None;
    let eval_point =
        |ctrl: &C, epoch: usize, curve: &mut Vec<TrainPoint>, sink: &mut S,
         best: &mut Option<(usize, f64, CheckpointBundle)>|
         -> Result<(), AgentError> {
            let policy = ctrl.policy_bundle();
            let summary = evaluate(
                cfg,
                &policy.scheduler,
                &policy.associator,
                seed,
                EVAL_OFFSET,
                cfg.train.eval_episodes,
                workers,
            )?;
            let bundle = ctrl.checkpoint();
            sink.on_eval(epoch, &summary, &bundle)?;
            if best.as_ref().map_or(true, |(_, m, _)| summary.mean > *m) {
                *best = Some((epoch, summary.mean, bundle));
            }
            curve.push(TrainPoint { epoch, summary });
            Ok(())
        };

    eval_point(ctrl, 0, &mut curve, sink, &mut best)?;
    for epoch in 1..=epochs {
        ctrl.train_episode(cfg, seed, (epoch - 1) as u64)?;
        if epoch % interval == 0 || epoch == epochs {
            eval_point(ctrl, epoch, &mut curve, sink, &mut best)?;
        }
    }

    let (best_epoch, best_mean, best) = best.expect("epoch 0 always evaluates");
    Ok(TrainOutcome {
        curve,
        best_epoch,
        best_mean,
        best,
        final_bundle: ctrl.checkpoint(),
        fed_rounds: ctrl.fed_rounds(),
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.deployment.ap_rows = 2;
        cfg.deployment.ap_cols = 2;
        cfg.deployment.ap_spacing = 40.0;
        cfg.deployment.n_uavs = 2;
        cfg.deployment.n_users = 8;
        cfg.agent.conv_channels = vec![4, 4];
        cfg.agent.sched_conv_channels = vec![4, 4];
        cfg.agent.hidden_dim = 16;
        cfg.agent.stream_dim = 8;
        cfg.agent.atoms_association = 5;
        cfg.agent.atoms_scheduler = 5;
        cfg.agent.batch_size = 4;
        cfg.agent.learn_start = 16;
        cfg.agent.replay_capacity = 4096;
        cfg.agent.train_interval = 50;
        cfg.train.epochs = 2;
        cfg.train.eval_interval = 1;
        cfg.train.eval_episodes = 1;
        cfg.validate().expect("tiny config is valid");
        cfg
    }

    struct CountingSink {
        epochs: Vec<usize>,
    }

    impl TrainSink for CountingSink {
        fn on_eval(
            &mut self,
            epoch: usize,
            summary: &EvalSummary,
            bundle: &CheckpointBundle,
        ) -> Result<(), AgentError> {
            assert!(summary.mean.is_finite());
            assert!(!bundle.entries.is_empty());
            self.epochs.push(epoch);
            Ok(())
        }
    }

    #[test]
    fn training_loop_evaluates_on_schedule_and_tracks_the_best() {
        let cfg = tiny_cfg();
        let mut ctrl = CentralizedController::new(&cfg, 21).unwrap();
        let mut sink = CountingSink { epochs: Vec::new() };
        let out = train(&cfg, &mut ctrl, 21, 1, &mut sink).unwrap();
        assert_eq!(sink.epochs, vec![0, 1, 2]);
        assert_eq!(out.curve.len(), 3);
        let best_from_curve = out
            .curve
            .iter()
            .map(|p| p.summary.mean)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_mean, best_from_curve);
        assert!(out.curve.iter().any(|p| p.epoch == out.best_epoch));
        assert_eq!(out.fed_rounds, 0);
        assert!(!out.final_bundle.entries.is_empty());
    }

    #[test]
    fn zero_epochs_still_yields_the_initial_checkpoint() {
        let mut cfg = tiny_cfg();
        cfg.train.epochs = 0;
        let mut ctrl = DistributedController::new(&cfg, 23, true);
        let out = train(&cfg, &mut ctrl, 23, 1, &mut NullSink).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.curve[0].epoch, 0);
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.best.entries.len(), 4, "one entry per AP");
        assert_eq!(out.fed_rounds, 0);
    }

    #[test]
    fn uneven_final_epoch_is_still_evaluated() {
        let mut cfg = tiny_cfg();
        cfg.train.epochs = 3;
        cfg.train.eval_interval = 2;
        let mut ctrl = CentralizedController::new(&cfg, 25).unwrap();
        let mut sink = CountingSink { epochs: Vec::new() };
        let out = train(&cfg, &mut ctrl, 25, 1, &mut sink).unwrap();
        assert_eq!(sink.epochs, vec![0, 2, 3]);
        assert_eq!(out.curve.len(), 3);
    }
}
