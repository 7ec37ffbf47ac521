//! Experiment runner: configuration, baseline and learned policies, the
//! round loop, and CSV/JSON outputs.

mod config;
mod output;
mod policy;
mod sim;

pub use config::{
    AllocConfig, ChannelConfig, DataConfig, Partition, PolicyKind, RewardConfig, RunConfig, TrainConfig,
};
pub use output::{compare_runs, fmt_sig9, read_summary, round_sig9, write_outputs, ROUNDS_HEADER};
pub use policy::{policy_heuristic, policy_loss_weighted, policy_proximal, policy_random, policy_rl};
pub use sim::{
    build_setup, calibrate_reward, compute_summary, heuristic_trajectories, run_experiment, ClientRecord,
    RoundMetrics, RunOutcome, RunSummary, Setup,
};
