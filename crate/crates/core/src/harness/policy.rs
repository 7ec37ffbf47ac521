use rand::seq::index;
use rand::Rng;

use crate::agent::{ActionVector, Agent};
use crate::device::{ChannelEnv, Device};
use crate::error::{Error, Result};
use crate::selection::{select_clients, ClusterSplit, SelectionPolicyState};

fn check_size(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::SelectionSize { k, n });
    }
    Ok(())
}

/// `k` distinct devices drawn uniformly, returned in ascending order.
pub fn policy_random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_size(k, n)?;
    let mut out = index::sample(rng, n, k).into_vec();
    out.sort_unstable();
    Ok(out)
}

/// Successive draws without replacement, each proportional to the device's
/// last known local loss.
pub fn policy_loss_weighted<R: Rng + ?Sized>(losses: &[f64], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_size(k, losses.len())?;
    if losses.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("losses must be finite and >= 0".into()));
    }
    // A zero-loss device keeps a sliver of mass so k draws always succeed.
    let floor = losses.iter().cloned().fold(0.0, f64::max).max(1.0) * 1e-9;
    let mut out = index::sample_weighted(rng, losses.len(), |i| losses[i].max(floor), k)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .into_vec();
    out.sort_unstable();
    Ok(out)
}

/// Selection for the proximal baseline; only local training differs from
/// the random policy.
pub fn policy_proximal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    policy_random(n, k, rng)
}

pub fn policy_heuristic(
    fleet: &[Device],
    k: usize,
    split: &ClusterSplit,
    state: &mut SelectionPolicyState,
    env: &ChannelEnv,
) -> Result<Vec<usize>> {
    select_clients(fleet, k, split, state, env)
}

/// ε-greedy over the agent's Q-scores for standardized fleet states.
pub fn policy_rl(
    agent: &mut Agent,
    states: &[Vec<f64>],
    k: usize,
    round: u64,
    total_rounds: u64,
) -> Result<ActionVector> {
    check_size(k, states.len())?;
    agent.act(states, k, round, total_rounds)
}
