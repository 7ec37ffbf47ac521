//! Q-learning scheduler.
//!
//! A shared per-device MLP scores each device from its standardized state;
//! the action is the top-k set (ε-greedy). Learning uses a replay buffer, a
//! target network synchronised every `sync_every` rounds, and a ranking-hinge
//! warm start on trajectories produced by the selection heuristic.

mod imitation;
pub mod io;
mod learn;
mod qnet;
mod replay;
mod reward;
mod state;

pub use imitation::{
    agreement, mean_hinge, pretrain_imitation, ranking_hinge, ImitationConfig, ImitationReport, Trajectory,
};
pub use learn::{select_action, sync_target, td_loss_and_grad, td_target, td_update, top_k, ActionVector};
pub use qnet::{q_scores, Optimizer, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{penalty_factor, reward, RewardParams};
pub use state::{build_state, log_features, predict_observation, DeviceState, Observation, Standardizer, FEATURES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub hidden: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub discount: f64,
    pub sync_every: u64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub updates_per_round: usize,
    pub pretrain_rounds: usize,
    /// Share of offline rounds that execute a random selection.
    pub pretrain_explore: f64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub margin: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            hidden: 32,
            epsilon_start: 0.2,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.5,
            discount: 0.9,
            sync_every: 5,
            replay_capacity: 2000,
            batch_size: 32,
            lr: 1e-4,
            updates_per_round: 1,
            pretrain_rounds: 500,
            pretrain_explore: 0.5,
            pretrain_epochs: 60,
            pretrain_lr: 3e-3,
            pretrain_batch: 8,
            margin: 0.3,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden >= 1
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && self.epsilon_decay_fraction > 0.0
            && (0.0..=1.0).contains(&self.discount)
            && self.sync_every >= 1
            && self.replay_capacity >= 1
            && self.batch_size >= 1
            && self.lr >= 0.0
            && self.pretrain_lr >= 0.0
            && (0.0..=1.0).contains(&self.pretrain_explore)
            && self.margin >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("agent: parameter out of range".into()))
        }
    }

    pub fn layers(&self) -> Vec<usize> {
        vec![FEATURES, self.hidden, self.hidden, 1]
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_decay_fraction` of `total_rounds`; `round` is 1-based.
    pub fn epsilon(&self, round: u64, total_rounds: u64) -> f64 {
        let horizon = (self.epsilon_decay_fraction * total_rounds as f64).max(1.0);
        let progress = ((round.saturating_sub(1)) as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }
}

/// Main/target networks plus replay and optimizer state.
pub struct Agent {
    pub params: AgentParams,
    pub main: QNetwork,
    pub target: QNetwork,
    pub replay: ReplayBuffer<Transition>,
    /// Feature statistics shared by pre-training and online rounds.
    pub standardizer: Standardizer,
    opt: Optimizer,
    rng: SimRng,
}

impl Agent {
    pub fn new(params: AgentParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut init_rng = stream_rng(seed, Stream::Agent, 0);
        let main = QNetwork::new(&params.layers(), &mut init_rng)?;
        let target = main.clone();
        Ok(Self {
            replay: ReplayBuffer::new(params.replay_capacity)?,
            standardizer: Standardizer::default(),
            opt: Optimizer::adam(params.lr),
            rng: stream_rng(seed, Stream::Replay, 0),
            params,
            main,
            target,
        })
    }

    /// Imitation warm start; the target network is synchronised afterwards.
    pub fn pretrain(&mut self, train: &[Trajectory], holdout: &[Trajectory]) -> Result<ImitationReport> {
        let cfg = ImitationConfig {
            epochs: self.params.pretrain_epochs,
            batch_size: self.params.pretrain_batch,
            margin: self.params.margin,
            shuffle: true,
        };
        let mut opt = Optimizer::adam(self.params.pretrain_lr);
        let report = pretrain_imitation(&mut self.main, train, holdout, &cfg, &mut opt, &mut self.rng)?;
        self.target.copy_from(&self.main);
        Ok(report)
    }

    pub fn act(&mut self, states: &[Vec<f64>], k: usize, round: u64, total_rounds: u64) -> Result<ActionVector> {
        let scores = q_scores(&self.main, states);
        let eps = self.params.epsilon(round, total_rounds);
        select_action(&scores, k, eps, &mut self.rng)
    }

    pub fn observe(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        self.replay.push(t);
        Ok(())
    }

    /// Runs the configured number of TD updates once the buffer holds a full
    /// batch. Returns the last pre-step loss, if any update ran.
    pub fn learn(&mut self) -> Result<Option<f64>> {
        if self.replay.len() < self.params.batch_size {
            return Ok(None);
        }
        let mut last = None;
        for _ in 0..self.params.updates_per_round {
            let batch = self.replay.sample(self.params.batch_size, &mut self.rng)?;
            last = Some(td_update(&mut self.main, &self.target, &batch, self.params.discount, &mut self.opt)?);
        }
        Ok(last)
    }

    pub fn end_round(&mut self, round: u64) -> Result<bool> {
        sync_target(&self.main, &mut self.target, round, self.params.sync_every)
    }
}
