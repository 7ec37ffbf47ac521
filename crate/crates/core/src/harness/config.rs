use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentParams;
use crate::alloc::SolverKind;
use crate::device::FleetParams;
use crate::error::{Error, Result};
use crate::fl::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Uniform random selection, plain FedAvg.
    Random,
    /// Sampling proportional to last known local loss.
    LossWeighted,
    /// Uniform random selection with a proximal local objective.
    Proximal,
    /// Cluster-balanced efficiency heuristic.
    Heuristic,
    /// Q-learning scheduler warm-started on the heuristic.
    Rl,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [Self::Random, Self::LossWeighted, Self::Proximal, Self::Heuristic, Self::Rl];

    pub fn id(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::LossWeighted => "loss_weighted",
            Self::Proximal => "proximal",
            Self::Heuristic => "heuristic",
            Self::Rl => "rl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.id() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub bandwidth_hz: f64,
    pub noise_w: f64,
    /// Parameter count behind the upload size `G = 32 · count`. Defaults to
    /// the trained model's own parameter count.
    pub payload_params: Option<usize>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { bandwidth_hz: 1e7, noise_w: 1e-3, payload_params: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub partition: Partition,
    pub concentration: f64,
    pub synthetic: SyntheticSpec,
    pub test_samples: usize,
    /// Optional columnar text files replacing the synthetic task.
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            partition: Partition::Dirichlet,
            concentration: 0.5,
            synthetic: SyntheticSpec::default(),
            test_samples: 2000,
            train_path: None,
            test_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub prox_mu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, prox_mu: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocConfig {
    pub solver: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AllocConfig {
    fn default() -> Self {
        Self { solver: SolverKind::Analytic, tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Unset thresholds are calibrated from a short random-policy prefix.
    pub latency_threshold: Option<f64>,
    pub energy_threshold: Option<f64>,
    pub variance_threshold: Option<f64>,
    pub latency_exponent: f64,
    pub energy_exponent: f64,
    pub variance_exponent: f64,
    pub calibration_rounds: usize,
    pub calibration_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            latency_threshold: None,
            energy_threshold: None,
            variance_threshold: None,
            latency_exponent: 1.0,
            energy_exponent: 1.0,
            variance_exponent: 1.0,
            calibration_rounds: 10,
            calibration_scale: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rounds: usize,
    pub clients: usize,
    pub per_round: usize,
    pub policy: PolicyKind,
    pub target_accuracy: f64,
    pub time_limit_s: f64,
    /// Worker threads for local training; 0 uses all cores.
    pub threads: usize,
    pub efficiency_factor: f64,
    pub profiles_path: Option<PathBuf>,
    pub channel: ChannelConfig,
    pub fleet: FleetParams,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub alloc: AllocConfig,
    pub reward: RewardConfig,
    pub agent: AgentParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rounds: 100,
            clients: 100,
            per_round: 10,
            policy: PolicyKind::Random,
            target_accuracy: 0.9,
            time_limit_s: 1e6,
            threads: 1,
            efficiency_factor: 0.9,
            profiles_path: None,
            channel: ChannelConfig::default(),
            fleet: FleetParams::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            alloc: AllocConfig::default(),
            reward: RewardConfig::default(),
            agent: AgentParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.profiles_path, &mut cfg.data.train_path, &mut cfg.data.test_path] {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.clients == 0 || self.per_round == 0 {
            return bad("clients and per_round must be >= 1");
        }
        if self.per_round > self.clients {
            return bad("per_round must not exceed clients");
        }
        if !(self.time_limit_s > 0.0) {
            return bad("time_limit_s must be positive");
        }
        if !(self.efficiency_factor > 0.0 && self.efficiency_factor < 1.0) {
            return bad("efficiency_factor must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return bad("target_accuracy must lie in [0, 1]");
        }
        if !(self.channel.bandwidth_hz > 0.0 && self.channel.noise_w > 0.0) {
            return bad("channel bandwidth and noise must be positive");
        }
        if !(self.data.concentration > 0.0) {
            return bad("data.concentration must be positive");
        }
        if self.data.train_path.is_some() != self.data.test_path.is_some() {
            return bad("data.train_path and data.test_path go together");
        }
        if !(self.train.lr >= 0.0 && self.train.prox_mu >= 0.0) {
            return bad("train.lr and train.prox_mu must be >= 0");
        }
        if !(self.alloc.tol > 0.0) || self.alloc.max_iter == 0 {
            return bad("alloc.tol > 0 and alloc.max_iter >= 1 required");
        }
        let r = &self.reward;
        if [r.latency_threshold, r.energy_threshold, r.variance_threshold].iter().flatten().any(|t| !(*t > 0.0)) {
            return bad("reward thresholds must be positive");
        }
        if !(r.calibration_scale > 0.0) || r.calibration_rounds == 0 {
            return bad("reward calibration needs rounds >= 1 and scale > 0");
        }
        self.fleet.validate()?;
        self.agent.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 4\npolicy = \"heuristic\"\n[data]\npartition = \"iid\"\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.policy, PolicyKind::Heuristic);
        assert_eq!(cfg.data.partition, Partition::Iid);
        assert_eq!(cfg.per_round, 10);
        assert_eq!(cfg.agent.sync_every, 5);
    }

    #[test]
    fn violations_are_rejected() {
        assert!(RunConfig::from_toml("per_round = 0").is_err());
        assert!(RunConfig::from_toml("clients = 5\nper_round = 6").is_err());
        assert!(RunConfig::from_toml("time_limit_s = 0.0").is_err());
        assert!(RunConfig::from_toml("efficiency_factor = 1.0").is_err());
        assert!(RunConfig::from_toml("policy = \"greedy\"").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
    }

    #[test]
    fn policy_ids() {
        for p in PolicyKind::ALL {
            assert_eq!(PolicyKind::parse(p.id()), Some(p));
        }
    }
}
