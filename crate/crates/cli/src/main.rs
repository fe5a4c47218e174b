//! `cfmb` — experiment front-end for the cell-free multi-group broadcast
//! simulator: baseline evaluation, agent training, checkpoint evaluation,
//! parameter sweeps, and embedding export.
//!
//! Every command reads one experiment config (TOML or JSON; built-in defaults
//! when omitted), echoes the effective values, and writes line-delimited,
//! schema-versioned records plus a JSON summary under `--out`. Runs are
//! reproducible from (config, seed, checkpoint) alone; repeating a command
//! with the same inputs into a fresh directory produces byte-identical
//! metrics files. Worker-thread count comes from the `CFMB_WORKERS`
//! environment variable (default 1) and never affects file contents.

use anyhow::{bail, Context, Result};
use cfmb_core::agents::{
    export_embeddings, train, AgentError, CentralizedController, CentralizedPolicy,
    CheckpointBundle, DistributedController, DistributedPolicy, HierarchicalController,
    LearnedScheduler, PolicyAssociator, PolicyBundle, PolicyScheduler, TrainSink, EVAL_OFFSET,
};
use cfmb_core::config::{ExperimentConfig, SweepAxis};
use cfmb_core::engine::{
    collect_episodes, evaluate, CbAssociator, CfAssociator, EvalSummary, PpfScheduler,
};
use cfmb_core::rlcore::AgentParams;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "cfmb",
    version,
    about = "Cell-free multi-group broadcast simulator for UAV-sourced tiled 360° video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Experiment config file (.toml or .json). Omit for built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for records, summaries, and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Record wall-clock timings (makes output files nondeterministic).
    #[arg(long)]
    timing: bool,
    /// Skip echoing the effective config to stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate heuristic baselines (P-PF scheduling + CB/CF association).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scheduler name. Options: ppf.
        #[arg(long, default_value = "ppf")]
        scheduler: String,
        /// Association name. Options: cb, cf.
        #[arg(long)]
        association: String,
        /// Episodes to run (default: train.eval_episodes).
        #[arg(long)]
        episodes: Option<usize>,
        /// First episode index.
        #[arg(long, default_value_t = 0)]
        first_episode: u64,
    },
    /// Train a learning controller and keep the best checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Agent name. Options: centralized, distributed, distributed_nofl,
        /// hierarchical, hierarchical_nofl.
        #[arg(long)]
        agent: String,
        /// Training epochs (default: train.epochs).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a trained checkpoint on held-out episodes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Agent name the checkpoint belongs to.
        #[arg(long)]
        agent: String,
        /// Checkpoint directory (as written by `train`).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episodes to run (default: train.eval_episodes).
        #[arg(long)]
        episodes: Option<usize>,
        /// First episode index (default: the held-out range).
        #[arg(long)]
        first_episode: Option<u64>,
    },
    /// Evaluate baseline policies across one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis to walk. Options: n_users, cluster_radius, slots, n_uavs.
        #[arg(long)]
        axis: Option<String>,
        /// Axis values, comma separated (default: sweep.values).
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Policies to compare, comma separated. Options: cb, cf.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        /// Episodes per cell (default: sweep.episodes, then train.eval_episodes).
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Replay one greedy episode of a distributed-family checkpoint and dump
    /// per-slot (observation, hidden vector, action) records per AP.
    Export {
        #[command(flatten)]
        common: Common,
        /// Agent name. Options: distributed, distributed_nofl, hierarchical,
        /// hierarchical_nofl.
        #[arg(long)]
        agent: String,
        /// Checkpoint directory (as written by `train`).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episode index to replay.
        #[arg(long, default_value_t = 0)]
        episode: u64,
    },
}

// ---------------------------------------------------------------------------
// Record schemas
// ---------------------------------------------------------------------------

const METRICS_SCHEMA: &str = "cfmb.metrics.v1";
const CURVE_SCHEMA: &str = "cfmb.curve.v1";
const SWEEP_SCHEMA: &str = "cfmb.sweep.v1";
const EMBEDDING_SCHEMA: &str = "cfmb.embedding.v1";
const SUMMARY_SCHEMA: &str = "cfmb.summary.v1";

/// One sweep cell's coordinates.
#[derive(Serialize, Clone)]
struct SweepPoint {
    axis: String,
    value: f64,
    policy: String,
}

/// One episode's outcome.
#[derive(Serialize)]
struct MetricsRecord<'a> {
    schema: &'static str,
    experiment: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_point: Option<&'a SweepPoint>,
    episode: u64,
    score: f64,
    per_frame_vpsnr: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

/// One learning-curve point (held-out evaluation during training).
#[derive(Serialize)]
struct CurveRecord<'a> {
    schema: &'static str,
    experiment: &'a str,
    epoch: usize,
    eval_episodes: usize,
    mean: f64,
    std_dev: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

/// One sweep cell's aggregate.
#[derive(Serialize)]
struct SweepRecord<'a> {
    schema: &'static str,
    experiment: &'a str,
    axis: &'a str,
    value: f64,
    policy: &'a str,
    episodes: usize,
    mean: f64,
    std_dev: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

/// One (slot, AP) embedding sample.
#[derive(Serialize)]
struct EmbeddingJson<'a> {
    schema: &'static str,
    experiment: &'a str,
    episode: u64,
    slot: usize,
    ap: usize,
    action: usize,
    hidden: &'a [f64],
    observation: &'a [f64],
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// Append-only line-delimited record writer.
struct Jsonl {
    writer: BufWriter<File>,
}

impl Jsonl {
    fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(Self { writer: BufWriter::new(file) })
    }

    fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// The resolved run context shared by all commands.
struct Run {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
    workers: usize,
    timing: bool,
    started: Instant,
}

impl Run {
    /// Load + validate the config, apply the seed override, create the output
    /// directory, and echo the effective configuration.
    fn prepare(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        let seed = cfg.seed;
        let workers = std::env::var("CFMB_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(1)
            .max(1);
        std::fs::create_dir_all(&common.out)
            .with_context(|| format!("creating {}", common.out.display()))?;
        let echo = cfg.to_toml_string();
        std::fs::write(common.out.join("config.toml"), &echo)?;
        if !common.quiet {
            println!("# effective configuration (seed {seed}, workers {workers})");
            println!("{echo}");
        }
        eprintln!("cfmb: seed {seed}, {workers} worker(s), output {}", common.out.display());
        Ok(Self {
            cfg,
            seed,
            out: common.out.clone(),
            workers,
            timing: common.timing,
            started: Instant::now(),
        })
    }

    /// Elapsed wall time, present only when `--timing` was given.
    fn wall_time(&self) -> Option<f64> {
        self.timing.then(|| self.started.elapsed().as_secs_f64())
    }

    fn write_summary(&self, summary: &serde_json::Value) -> Result<()> {
        let path = self.out.join("summary.json");
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Policy name resolution
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum AgentKind {
    Centralized,
    Distributed { federated: bool },
    Hierarchical { federated: bool },
}

impl AgentKind {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "centralized" => Ok(Self::Centralized),
            "distributed" => Ok(Self::Distributed { federated: true }),
            "distributed_nofl" => Ok(Self::Distributed { federated: false }),
            "hierarchical" => Ok(Self::Hierarchical { federated: true }),
            "hierarchical_nofl" => Ok(Self::Hierarchical { federated: false }),
            other => bail!(
                "unknown agent '{other}'; options: centralized, distributed, \
                 distributed_nofl, hierarchical, hierarchical_nofl"
            ),
        }
    }
}

fn baseline_associator(name: &str) -> Result<PolicyAssociator> {
    match name {
        "cb" => Ok(PolicyAssociator::Cb(CbAssociator)),
        "cf" => Ok(PolicyAssociator::Cf(CfAssociator)),
        other => bail!("unknown association '{other}'; options: cb, cf"),
    }
}

fn parse_axis(name: &str) -> Result<SweepAxis> {
    match name {
        "n_users" => Ok(SweepAxis::NUsers),
        "cluster_radius" => Ok(SweepAxis::ClusterRadius),
        "slots" => Ok(SweepAxis::Slots),
        "n_uavs" => Ok(SweepAxis::NUavs),
        other => bail!(
            "unknown axis '{other}'; options: n_users, cluster_radius, slots, n_uavs"
        ),
    }
}

/// Apply one sweep-axis value to a config copy and re-validate it.
fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let as_count = |v: f64, key: &str| -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            bail!("axis {key} needs a positive integer value, got {v}");
        }
        Ok(v as usize)
    };
    match axis {
        SweepAxis::NUsers => cfg.deployment.n_users = as_count(value, "n_users")?,
        SweepAxis::ClusterRadius => cfg.deployment.cluster_radius = value,
        SweepAxis::Slots => {
            // The slots axis varies the per-reschedule slot budget at constant
            // per-slot airtime: pin the slot duration at the base config's
            // value so every point carries the same tile capacity per slot and
            // the axis isolates scheduling granularity, not link margin.
            cfg.time.slot_seconds = Some(base.slot_seconds());
            cfg.time.slots_per_reschedule = as_count(value, "slots")?;
        }
        SweepAxis::NUavs => cfg.deployment.n_uavs = as_count(value, "n_uavs")?,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Rebuild the frozen evaluation policy for `agent` from a checkpoint
/// directory written by `train`.
fn policy_from_checkpoint(
    cfg: &ExperimentConfig,
    agent: AgentKind,
    dir: &Path,
) -> Result<PolicyBundle> {
    let bundle = CheckpointBundle::load(dir)
        .with_context(|| format!("loading checkpoint {}", dir.display()))?;
    let ap_sets = |bundle: &CheckpointBundle| -> Vec<AgentParams> {
        bundle
            .entries
            .iter()
            .filter(|(name, _)| name.starts_with("ap"))
            .map(|(_, p)| p.clone())
            .collect()
    };
    match agent {
        AgentKind::Centralized => {
            let params = bundle
                .entry("association")
                .context("checkpoint has no 'association' entry")?;
            Ok(PolicyBundle {
                scheduler: PolicyScheduler::Ppf(PpfScheduler),
                associator: PolicyAssociator::Centralized(CentralizedPolicy::from_params(
                    cfg, params,
                )?),
            })
        }
        AgentKind::Distributed { .. } => Ok(PolicyBundle {
            scheduler: PolicyScheduler::Ppf(PpfScheduler),
            associator: PolicyAssociator::Distributed(DistributedPolicy::from_params(
                cfg,
                &ap_sets(&bundle),
            )?),
        }),
        AgentKind::Hierarchical { .. } => {
            let sched = bundle
                .entry("scheduler")
                .context("checkpoint has no 'scheduler' entry")?;
            Ok(PolicyBundle {
                scheduler: PolicyScheduler::Learned(LearnedScheduler::from_params(cfg, sched)?),
                associator: PolicyAssociator::Distributed(DistributedPolicy::from_params(
                    cfg,
                    &ap_sets(&bundle),
                )?),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Run episodes under a frozen policy and write metrics + summary.
fn run_policy_evaluation(
    run: &Run,
    experiment: &str,
    policy: &PolicyBundle,
    first_episode: u64,
    episodes: usize,
    extra_summary: serde_json::Value,
) -> Result<EvalSummary> {
    let results = collect_episodes(
        &run.cfg,
        &policy.scheduler,
        &policy.associator,
        run.seed,
        first_episode,
        episodes,
        run.workers,
    )?;
    let mut metrics = Jsonl::open(&run.out.join("metrics.jsonl"))?;
    for (i, res) in results.iter().enumerate() {
        metrics.write(&MetricsRecord {
            schema: METRICS_SCHEMA,
            experiment,
            sweep_point: None,
            episode: first_episode + i as u64,
            score: res.score,
            per_frame_vpsnr: &res.per_frame_vpsnr,
            wall_time_s: run.wall_time(),
        })?;
    }
    metrics.finish()?;
    let summary = EvalSummary::from_scores(results.iter().map(|r| r.score).collect());
    let mut body = serde_json::json!({
        "schema": SUMMARY_SCHEMA,
        "experiment": experiment,
        "episodes": episodes,
        "first_episode": first_episode,
        "mean": summary.mean,
        "std_dev": summary.std_dev,
        "wall_time_s": run.wall_time(),
    });
    if let (Some(a), Some(b)) = (body.as_object_mut(), extra_summary.as_object()) {
        for (k, v) in b {
            a.insert(k.clone(), v.clone());
        }
    }
    run.write_summary(&body)?;
    eprintln!(
        "cfmb: {experiment}: mean {:.4} ± {:.4} over {episodes} episode(s)",
        summary.mean, summary.std_dev
    );
    Ok(summary)
}

fn cmd_simulate(
    common: &Common,
    scheduler: &str,
    association: &str,
    episodes: Option<usize>,
    first_episode: u64,
) -> Result<()> {
    let run = Run::prepare(common)?;
    if scheduler != "ppf" {
        bail!("unknown scheduler '{scheduler}'; options: ppf");
    }
    let policy = PolicyBundle {
        scheduler: PolicyScheduler::Ppf(PpfScheduler),
        associator: baseline_associator(association)?,
    };
    let episodes = episodes.unwrap_or(run.cfg.train.eval_episodes);
    let experiment = format!("simulate:{scheduler}+{association}:seed{}", run.seed);
    run_policy_evaluation(
        &run,
        &experiment,
        &policy,
        first_episode,
        episodes,
        serde_json::json!({"scheduler": scheduler, "association": association}),
    )?;
    Ok(())
}

/// Streams curve records and keeps the best checkpoint on disk as training
/// progresses. Epoch-0 evaluation seeds the initial checkpoint but is not a
/// curve record, so a finished run holds `epochs / eval_interval` records
/// (plus one for an uneven final epoch).
struct CurveSink<'a> {
    run: &'a Run,
    experiment: &'a str,
    curve: Jsonl,
    best_dir: PathBuf,
    best_mean: Option<f64>,
    eval_episodes: usize,
}

impl TrainSink for CurveSink<'_> {
    fn on_eval(
        &mut self,
        epoch: usize,
        summary: &EvalSummary,
        bundle: &CheckpointBundle,
    ) -> Result<(), AgentError> {
        let to_agent_err = AgentError::Io;
        if epoch > 0 {
            self.curve
                .write(&CurveRecord {
                    schema: CURVE_SCHEMA,
                    experiment: self.experiment,
                    epoch,
                    eval_episodes: self.eval_episodes,
                    mean: summary.mean,
                    std_dev: summary.std_dev,
                    wall_time_s: self.run.wall_time(),
                })
                .map_err(|e| to_agent_err(std::io::Error::other(e.to_string())))?;
        }
        if self.best_mean.map_or(true, |m| summary.mean > m) {
            self.best_mean = Some(summary.mean);
            bundle.save(&self.best_dir)?;
        }
        eprintln!(
            "cfmb: epoch {epoch}: held-out mean {:.4} ± {:.4}",
            summary.mean, summary.std_dev
        );
        Ok(())
    }
}

fn cmd_train(common: &Common, agent_name: &str, epochs: Option<usize>) -> Result<()> {
    let mut run = Run::prepare(common)?;
    if let Some(epochs) = epochs {
        run.cfg.train.epochs = epochs;
    }
    let kind = AgentKind::parse(agent_name)?;
    let experiment = format!("train:{agent_name}:seed{}", run.seed);
    let checkpoints = run.out.join("checkpoints");
    let best_dir = checkpoints.join("best");
    let final_dir = checkpoints.join("final");
    let mut sink = CurveSink {
        run: &run,
        experiment: &experiment,
        curve: Jsonl::open(&run.out.join("curve.jsonl"))?,
        best_dir: best_dir.clone(),
        best_mean: None,
        eval_episodes: run.cfg.train.eval_episodes,
    };
    let outcome = match kind {
        AgentKind::Centralized => {
            let mut ctrl = CentralizedController::new(&run.cfg, run.seed)?;
            train(&run.cfg, &mut ctrl, run.seed, run.workers, &mut sink)?
        }
        AgentKind::Distributed { federated } => {
            let mut ctrl = DistributedController::new(&run.cfg, run.seed, federated);
            train(&run.cfg, &mut ctrl, run.seed, run.workers, &mut sink)?
        }
        AgentKind::Hierarchical { federated } => {
            let mut ctrl = HierarchicalController::new(&run.cfg, run.seed, federated)?;
            train(&run.cfg, &mut ctrl, run.seed, run.workers, &mut sink)?
        }
    };
    sink.curve.finish()?;
    outcome.best.save(&best_dir)?;
    outcome.final_bundle.save(&final_dir)?;
    let last = outcome.curve.last().expect("epoch 0 always evaluates");
    run.write_summary(&serde_json::json!({
        "schema": SUMMARY_SCHEMA,
        "experiment": experiment,
        "agent": agent_name,
        "epochs": run.cfg.train.epochs,
        "eval_interval": run.cfg.train.eval_interval,
        "eval_episodes": run.cfg.train.eval_episodes,
        "best_epoch": outcome.best_epoch,
        "best_mean": outcome.best_mean,
        "final_epoch": last.epoch,
        "final_mean": last.summary.mean,
        "final_std_dev": last.summary.std_dev,
        "fed_rounds": outcome.fed_rounds,
        "wall_time_s": run.wall_time(),
    }))?;
    eprintln!(
        "cfmb: {experiment}: best epoch {} (mean {:.4}), {} federated round(s)",
        outcome.best_epoch, outcome.best_mean, outcome.fed_rounds
    );
    Ok(())
}

fn cmd_evaluate(
    common: &Common,
    agent_name: &str,
    checkpoint: &Path,
    episodes: Option<usize>,
    first_episode: Option<u64>,
) -> Result<()> {
    let run = Run::prepare(common)?;
    let kind = AgentKind::parse(agent_name)?;
    let policy = policy_from_checkpoint(&run.cfg, kind, checkpoint)?;
    let episodes = episodes.unwrap_or(run.cfg.train.eval_episodes);
    let first = first_episode.unwrap_or(EVAL_OFFSET);
    let experiment = format!("evaluate:{agent_name}:seed{}", run.seed);
    run_policy_evaluation(
        &run,
        &experiment,
        &policy,
        first,
        episodes,
        serde_json::json!({
            "agent": agent_name,
            "checkpoint": checkpoint.display().to_string(),
        }),
    )?;
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    axis: Option<&str>,
    values: &[f64],
    policies: &[String],
    episodes: Option<usize>,
) -> Result<()> {
    let run = Run::prepare(common)?;
    let axis = match axis {
        Some(name) => parse_axis(name)?,
        None => run
            .cfg
            .sweep
            .axis
            .context("no sweep axis: pass --axis or set [sweep] axis in the config")?,
    };
    let values: Vec<f64> =
        if values.is_empty() { run.cfg.sweep.values.clone() } else { values.to_vec() };
    if values.is_empty() {
        bail!("no sweep values: pass --values or set [sweep] values in the config");
    }
    let policies: Vec<String> = if policies.is_empty() {
        if run.cfg.sweep.policies.is_empty() {
            vec!["cb".to_string(), "cf".to_string()]
        } else {
            run.cfg.sweep.policies.clone()
        }
    } else {
        policies.to_vec()
    };
    let episodes = episodes
        .or(run.cfg.sweep.episodes)
        .unwrap_or(run.cfg.train.eval_episodes);
    let experiment = format!("sweep:{}:seed{}", axis.as_str(), run.seed);

    let mut records = Jsonl::open(&run.out.join("sweep.jsonl"))?;
    let mut cells = Vec::new();
    for &value in &values {
        let cfg = apply_axis(&run.cfg, axis, value)?;
        for policy_name in &policies {
            let policy = PolicyBundle {
                scheduler: PolicyScheduler::Ppf(PpfScheduler),
                associator: baseline_associator(policy_name)?,
            };
            let summary = evaluate(
                &cfg,
                &policy.scheduler,
                &policy.associator,
                run.seed,
                0,
                episodes,
                run.workers,
            )?;
            records.write(&SweepRecord {
                schema: SWEEP_SCHEMA,
                experiment: &experiment,
                axis: axis.as_str(),
                value,
                policy: policy_name,
                episodes,
                mean: summary.mean,
                std_dev: summary.std_dev,
                wall_time_s: run.wall_time(),
            })?;
            eprintln!(
                "cfmb: {}={value} {policy_name}: mean {:.4} ± {:.4}",
                axis.as_str(),
                summary.mean,
                summary.std_dev
            );
            cells.push(serde_json::json!({
                "axis": axis.as_str(),
                "value": value,
                "policy": policy_name,
                "mean": summary.mean,
                "std_dev": summary.std_dev,
            }));
        }
    }
    records.finish()?;
    run.write_summary(&serde_json::json!({
        "schema": SUMMARY_SCHEMA,
        "experiment": experiment,
        "axis": axis.as_str(),
        "values": values,
        "policies": policies,
        "episodes": episodes,
        "cells": cells,
        "wall_time_s": run.wall_time(),
    }))?;
    Ok(())
}

fn cmd_export(common: &Common, agent_name: &str, checkpoint: &Path, episode: u64) -> Result<()> {
    let run = Run::prepare(common)?;
    let kind = AgentKind::parse(agent_name)?;
    if kind == AgentKind::Centralized {
        bail!(
            "export needs per-AP agents; options: distributed, distributed_nofl, \
             hierarchical, hierarchical_nofl"
        );
    }
    let policy = policy_from_checkpoint(&run.cfg, kind, checkpoint)?;
    let PolicyAssociator::Distributed(assoc) = &policy.associator else {
        bail!("checkpoint did not produce a distributed association policy");
    };
    let records =
        export_embeddings(&run.cfg, &policy.scheduler, assoc, run.seed, episode)?;
    let experiment = format!("export:{agent_name}:seed{}", run.seed);
    let mut out = Jsonl::open(&run.out.join("embeddings.jsonl"))?;
    for r in &records {
        out.write(&EmbeddingJson {
            schema: EMBEDDING_SCHEMA,
            experiment: &experiment,
            episode,
            slot: r.slot,
            ap: r.ap,
            action: r.action,
            hidden: &r.hidden,
            observation: &r.observation,
        })?;
    }
    out.finish()?;
    run.write_summary(&serde_json::json!({
        "schema": SUMMARY_SCHEMA,
        "experiment": experiment,
        "agent": agent_name,
        "episode": episode,
        "records": records.len(),
        "wall_time_s": run.wall_time(),
    }))?;
    eprintln!("cfmb: {experiment}: {} embedding record(s)", records.len());
    Ok(())
}

// ---------------------------------------------------------------------------

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { common, scheduler, association, episodes, first_episode } => {
            cmd_simulate(&common, &scheduler, &association, episodes, first_episode)
        }
        Command::Train { common, agent, epochs } => cmd_train(&common, &agent, epochs),
        Command::Evaluate { common, agent, checkpoint, episodes, first_episode } => {
            cmd_evaluate(&common, &agent, &checkpoint, episodes, first_episode)
        }
        Command::Sweep { common, axis, values, policies, episodes } => {
            cmd_sweep(&common, axis.as_deref(), &values, &policies, episodes)
        }
        Command::Export { common, agent, checkpoint, episode } => {
            cmd_export(&common, &agent, &checkpoint, episode)
        }
    }
}
