//! A complete distributional Q-learning agent: noisy dueling C51 network,
//! double-Q multi-step targets, prioritized replay with annealed importance
//! sampling, Adam, and periodic hard target sync.

use crate::config::AgentConfig;
use crate::rlcore::{
    boltzmann_sample, greedy_action, kl_logit_gradient, kl_loss, multistep_return,
    project_bellman, Adam, AgentParams, PrioritizedReplay, QNet, QNetConfig, Support,
};
use crate::rng::{rng_for, CfmbRng};
use std::collections::VecDeque;

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

/// One replay-ready transition. `reward` is the already-discounted n-step
/// return; `gamma_n` the bootstrap factor γⁿ (0 with no bootstrap); a `None`
/// next observation marks a terminal tail.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub gamma_n: f64,
    pub next_obs: Option<Vec<f64>>,
}

/// Rolling n-step assembler: feed raw steps, get transitions whose rewards
/// accumulate over `n` steps.
#[derive(Debug, Clone)]
pub struct NStepQueue {
    n: usize,
    gamma: f64,
    steps: VecDeque<(Vec<f64>, usize, f64)>,
}

impl NStepQueue {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step length must be >= 1");
        Self { n, gamma, steps: VecDeque::with_capacity(n) }
    }

    fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|(_, _, r)| *r).collect()
    }

    /// Append one step; once `n` steps are buffered, emit the transition that
    /// started `n` steps ago, bootstrapping on `next_obs`.
    pub fn push(
        &mut self,
        obs: Vec<f64>,
        action: usize,
        reward: f64,
        next_obs: &[f64],
    ) -> Option<Transition> {
        self.steps.push_back((obs, action, reward));
        if self.steps.len() < self.n {
            return None;
        }
        let rewards = self.rewards();
        let (obs0, action0, _) = self.steps.pop_front().expect("queue non-empty");
        Some(Transition {
            obs: obs0,
            action: action0,
            reward: multistep_return(&rewards, self.n, self.gamma),
            gamma_n: self.gamma.powi(self.n as i32),
            next_obs: Some(next_obs.to_vec()),
        })
    }

    /// Close the episode: every buffered step becomes a terminal transition
    /// over the rewards that remain after it.
    pub fn flush_terminal(&mut self) -> Vec<Transition> {
        let mut out = Vec::with_capacity(self.steps.len());
        while let Some((obs, action, _)) = self.steps.front().cloned() {
            let rewards = self.rewards();
            out.push(Transition {
                obs,
                action,
                reward: multistep_return(&rewards, rewards.len(), self.gamma),
                gamma_n: 0.0,
                next_obs: None,
            });
            self.steps.pop_front();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Agent configuration
// ---------------------------------------------------------------------------

/// Everything one agent needs to know, resolved from the experiment config.
#[derive(Debug, Clone)]
pub struct RainbowSpec {
    pub net: QNetConfig,
    pub v_min: f64,
    pub v_max: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub n_step: usize,
    pub learning_rate: f64,
    pub per_alpha: f64,
    pub per_beta0: f64,
    pub per_anneal_steps: usize,
    pub replay_capacity: usize,
    pub target_sync: usize,
    pub learn_start: usize,
    pub boltzmann_beta: f64,
    pub boltzmann_negate: bool,
}

impl RainbowSpec {
    /// Spec for an association agent (centralized or per-AP): the five-layer
    /// encoder and the association atom count.
    pub fn association(
        acfg: &AgentConfig,
        shape: (usize, usize, usize),
        actions: usize,
        v_max: f64,
    ) -> Self {
        Self::from_parts(acfg, &acfg.conv_channels, acfg.atoms_association, shape, actions, v_max)
    }

    /// Spec for the scheduler meta-agent: the shallower encoder, the
    /// scheduler atom count, one action head per (UAV, tile).
    pub fn scheduler(
        acfg: &AgentConfig,
        shape: (usize, usize, usize),
        actions: usize,
        v_max: f64,
    ) -> Self {
        Self::from_parts(acfg, &acfg.sched_conv_channels, acfg.atoms_scheduler, shape, actions, v_max)
    }

    fn from_parts(
        acfg: &AgentConfig,
        conv: &[usize],
        atoms: usize,
        (in_channels, height, width): (usize, usize, usize),
        actions: usize,
        v_max: f64,
    ) -> Self {
        Self {
            net: QNetConfig {
                in_channels,
                height,
                width,
                conv_channels: conv.to_vec(),
                hidden: acfg.hidden_dim,
                stream: acfg.stream_dim,
                actions,
                atoms,
                dropout: acfg.dropout,
                sigma0: acfg.noisy_sigma0,
            },
            v_min: acfg.v_min,
            v_max,
            batch_size: acfg.batch_size,
            gamma: acfg.gamma,
            n_step: acfg.n_step,
            learning_rate: acfg.learning_rate,
            per_alpha: acfg.per_alpha,
            per_beta0: acfg.per_beta0,
            per_anneal_steps: acfg.per_anneal_steps,
            replay_capacity: acfg.replay_capacity,
            target_sync: acfg.target_sync,
            learn_start: acfg.learn_start,
            boltzmann_beta: acfg.boltzmann_beta,
            boltzmann_negate: acfg.boltzmann_negate,
        }
    }
}

// ---------------------------------------------------------------------------
// The agent
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Rainbow {
    pub online: QNet,
    pub target: QNet,
    pub opt: Adam,
    pub replay: PrioritizedReplay<Transition>,
    pub support: Support,
    spec: RainbowSpec,
    nstep: NStepQueue,
    /// Drives exploration noise and Boltzmann sampling.
    act_rng: CfmbRng,
    /// Drives replay sampling, training noise, and dropout masks.
    train_rng: CfmbRng,
    pub grad_steps: usize,
    pub env_steps: usize,
}

impl Rainbow {
    /// Build a fresh agent. `stream` and `idx` separate the random streams of
    /// different agents under one experiment seed.
    pub fn new(spec: RainbowSpec, root_seed: u64, stream: &str, idx: u64) -> Self {
        let mut init_rng = rng_for(root_seed, &format!("{stream}-init"), idx);
        let online = QNet::new(spec.net.clone(), &mut init_rng);
        let mut target = QNet::new(spec.net.clone(), &mut init_rng);
        target.params.copy_from(&online.params).expect("target mirrors the online layout");
        let opt = Adam::new(&online.params, spec.learning_rate);
        let replay = PrioritizedReplay::new(spec.replay_capacity, spec.per_alpha);
        let support = Support::new(spec.v_min, spec.v_max, spec.net.atoms)
            .expect("agent support bounds are validated by the config");
        let nstep = NStepQueue::new(spec.n_step, spec.gamma);
        Self {
            online,
            target,
            opt,
            replay,
            support,
            act_rng: rng_for(root_seed, &format!("{stream}-act"), idx),
            train_rng: rng_for(root_seed, &format!("{stream}-train"), idx),
            spec,
            nstep,
            grad_steps: 0,
            env_steps: 0,
        }
    }

    pub fn spec(&self) -> &RainbowSpec {
        &self.spec
    }

    /// Exploration action: fresh factorized noise, greedy over expectations.
    pub fn act_greedy(&mut self, obs: &[f64]) -> usize {
        let noise = self.online.sample_noise(&mut self.act_rng);
        let fwd = self.online.forward(obs, &noise, None).expect("observation matches net shape");
        greedy_action(&fwd.probs, &self.support)
    }

    /// Exploration action: fresh noise, Boltzmann-sampled over expectations.
    pub fn act_boltzmann(&mut self, obs: &[f64]) -> usize {
        let noise = self.online.sample_noise(&mut self.act_rng);
        let fwd = self.online.forward(obs, &noise, None).expect("observation matches net shape");
        let q: Vec<f64> = (0..self.spec.net.actions)
            .map(|a| {
                let nz = self.spec.net.atoms;
                self.support.expectation(&fwd.probs[a * nz..(a + 1) * nz])
            })
            .collect();
        boltzmann_sample(&q, self.spec.boltzmann_beta, self.spec.boltzmann_negate, &mut self.act_rng)
    }

    /// Evaluation action: zero noise, no dropout, greedy.
    pub fn act_eval(&self, obs: &[f64]) -> usize {
        let noise = self.online.zero_noise();
        let fwd = self.online.forward(obs, &noise, None).expect("observation matches net shape");
        greedy_action(&fwd.probs, &self.support)
    }

    /// Per-action expectations under zero noise (the scheduler's priorities).
    pub fn eval_expectations(&self, obs: &[f64]) -> Vec<f64> {
        let noise = self.online.zero_noise();
        let fwd = self.online.forward(obs, &noise, None).expect("observation matches net shape");
        let nz = self.spec.net.atoms;
        (0..self.spec.net.actions)
            .map(|a| self.support.expectation(&fwd.probs[a * nz..(a + 1) * nz]))
            .collect()
    }

    /// Record a non-terminal step.
    pub fn observe(&mut self, obs: Vec<f64>, action: usize, reward: f64, next_obs: &[f64]) {
        self.env_steps += 1;
        if let Some(tr) = self.nstep.push(obs, action, reward, next_obs) {
            self.replay.push(tr);
        }
    }

    /// Record the episode's final step and flush the n-step tail.
    pub fn observe_terminal(&mut self, obs: Vec<f64>, action: usize, reward: f64) {
        self.env_steps += 1;
        self.nstep.steps.push_back((obs, action, reward));
        for tr in self.nstep.flush_terminal() {
            self.replay.push(tr);
        }
    }

    /// Whether enough experience is buffered to train.
    pub fn ready(&self) -> bool {
        self.replay.len() >= self.spec.learn_start.max(self.spec.batch_size)
    }

    /// Current importance-sampling exponent (linear anneal to 1).
    pub fn per_beta(&self) -> f64 {
        let t = (self.grad_steps as f64 / self.spec.per_anneal_steps as f64).min(1.0);
        self.spec.per_beta0 + (1.0 - self.spec.per_beta0) * t
    }

    /// One gradient step: double-Q distributional targets, KL loss weighted
    /// by importance sampling, priorities refreshed from the per-sample loss.
    /// Returns the batch mean KL, or `None` before `ready()`.
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
        let n_actions = self.spec.net.actions;
        let mut grads = self.online.params.zeros_like();
        let mut grad_logits = vec![0.0; n_actions * nz];
        let mut losses = Vec::with_capacity(batch.indices.len());
        for (k, &idx) in batch.indices.iter().enumerate() {
            let tr = self.replay.get(idx);
            let target_dist = match &tr.next_obs {
                Some(next) => {
                    let sel = self
                        .online
                        .forward(next, &noise_select, None)
                        .expect("stored next observation matches net shape");
                    let a_star = greedy_action(&sel.probs, &self.support);
                    let tgt = self
                        .target
                        .forward(next, &noise_target, None)
                        .expect("stored next observation matches net shape");
                    let row = &tgt.probs[a_star * nz..(a_star + 1) * nz];
                    project_bellman(tr.reward, tr.gamma_n, row, &self.support)
                }
                None => {
                    // Terminal: a point mass at the return, projected.
                    let uniform = vec![1.0 / nz as f64; nz];
                    project_bellman(tr.reward, 0.0, &uniform, &self.support)
                }
            };
            let fwd = self
                .online
                .forward(&tr.obs, &noise_online, Some(&mut self.train_rng))
                .expect("stored observation matches net shape");
            let row = &fwd.probs[tr.action * nz..(tr.action + 1) * nz];
            let loss = kl_loss(row, &target_dist);
            grad_logits.fill(0.0);
            kl_logit_gradient(
                row,
                &target_dist,
                &mut grad_logits[tr.action * nz..(tr.action + 1) * nz],
            );
            let scale = batch.weights[k] / self.spec.batch_size as f64;
            for g in &mut grad_logits[tr.action * nz..(tr.action + 1) * nz] {
                *g *= scale;
            }
            self.online.backward(&tr.obs, &fwd, &noise_online, &grad_logits, &mut grads);
            losses.push(loss);
        }
        for (k, &idx) in batch.indices.iter().enumerate() {
            self.replay.update_priority(idx, losses[k]);
        }
        self.opt.step(&mut self.online.params, &grads);
        self.grad_steps += 1;
        if self.grad_steps % self.spec.target_sync == 0 {
            self.sync_target();
        }
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    /// Hard-copy online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target.params.copy_from(&self.online.params).expect("networks share one layout");
    }

    /// Snapshot of the online parameters (the checkpointed state).
    pub fn params(&self) -> &AgentParams {
        &self.online.params
    }

    /// Replace the online parameters (e.g. from FedAvg or a checkpoint).
    pub fn set_params(&mut self, params: &AgentParams) -> Result<(), crate::rlcore::ParamError> {
        self.online.params.copy_from(params)
    }
}

// ---------------------------------------------------------------------------
