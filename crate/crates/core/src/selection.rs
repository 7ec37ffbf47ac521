//! Energy-balancing selection heuristic.
//!
//! Devices are split into a low and a high cluster by their ideal
//! communication energy (β = 1). Each round half of the slots go to the best
//! low-cluster devices and half to the best high-cluster devices, ranked by the
//! efficiency `F = α^φ / (E_trans + E_train)` where φ counts past selections.

use std::cmp::Ordering;

use crate::alloc::cost_coefficient;
use crate::device::{ChannelEnv, Device};
use crate::error::{Error, Result};

/// Communication energy with the whole band; identical to the allocator's
/// cost coefficient.
pub fn ideal_energy(d: &Device, env: &ChannelEnv) -> Result<f64> {
    cost_coefficient(d, env)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSplit {
    /// Device ids, ascending.
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    /// A device is in `high` iff its ideal energy is strictly above this.
    pub threshold: f64,
}

impl ClusterSplit {
    pub fn is_high(&self, id: usize) -> bool {
        self.high.binary_search(&id).is_ok()
    }
}

/// Optimal 1-D two-means split: the threshold that minimises the summed
/// within-cluster squared error. Only boundaries between distinct values are
/// considered, so ties never straddle clusters. Returns per-value membership
/// (`true` = high) and the threshold; with fewer than two distinct values
/// everything is low.
pub fn two_means_split(values: &[f64]) -> (Vec<bool>, f64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    if n == 0 {
        return (vec![], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sorted: Vec<f64> = order.iter().map(|&i| values[i] - mean).collect();
    let total: f64 = sorted.iter().sum();
    let total_sq: f64 = sorted.iter().map(|x| x * x).sum();

    let mut best: Option<(f64, usize)> = None;
    let (mut s, mut sq) = (0.0, 0.0);
    for t in 1..n {
        s += sorted[t - 1];
        sq += sorted[t - 1] * sorted[t - 1];
        if sorted[t - 1] == sorted[t] {
            continue;
        }
        let (nl, nh) = (t as f64, (n - t) as f64);
        let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s) * (total - s) / nh);
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, t));
        }
    }

    let mut high = vec![false; n];
    match best {
        None => (high, values[order[n - 1]]),
        Some((_, t)) => {
            for &i in &order[t..] {
                high[i] = true;
            }
            let threshold = 0.5 * (values[order[t - 1]] + values[order[t]]);
            (high, threshold)
        }
    }
}

pub fn cluster_by_ideal_energy(fleet: &[Device], env: &ChannelEnv) -> Result<ClusterSplit> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let energies = fleet.iter().map(|d| ideal_energy(d, env)).collect::<Result<Vec<_>>>()?;
    let (is_high, threshold) = two_means_split(&energies);
    let mut split = ClusterSplit { high: vec![], low: vec![], threshold };
    for (d, h) in fleet.iter().zip(is_high) {
        if h {
            split.high.push(d.id);
        } else {
            split.low.push(d.id);
        }
    }
    split.high.sort_unstable();
    split.low.sort_unstable();
    Ok(split)
}

/// `F = α^φ / (E_trans + E_train)`.
pub fn utility(phi: u32, e_trans: f64, e_train: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("efficiency factor {alpha} outside (0, 1)")));
    }
    let total = e_trans + e_train;
    if !(total > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok(alpha.powi(phi as i32) / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicyState {
    pub selection_counts: Vec<u32>,
    pub efficiency_factor: f64,
}

impl SelectionPolicyState {
    pub fn new(n: usize, efficiency_factor: f64) -> Result<Self> {
        if !(efficiency_factor > 0.0 && efficiency_factor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "efficiency factor {efficiency_factor} outside (0, 1)"
            )));
        }
        Ok(Self { selection_counts: vec![0; n], efficiency_factor })
    }
}

fn check_ids(fleet: &[Device]) -> Result<()> {
    if fleet.iter().enumerate().any(|(i, d)| d.id != i) {
        return Err(Error::InvalidArgument("fleet ids must equal positions".into()));
    }
    Ok(())
}

/// Pre-selection energy estimate `(E_trans, E_train)` with a uniform share
/// `β = 1/k`.
pub fn estimated_energies(d: &Device, k: usize, env: &ChannelEnv) -> Result<(f64, f64)> {
    let comm = d.comm_energy(1.0 / k as f64, env)?;
    Ok((comm.energy, d.training_energy()))
}

/// Efficiency score of every device under the current ledger.
pub fn score_devices(
    fleet: &[Device],
    k: usize,
    state: &SelectionPolicyState,
    env: &ChannelEnv,
) -> Result<Vec<f64>> {
    fleet
        .iter()
        .map(|d| {
            let (e_trans, e_train) = estimated_energies(d, k, env)?;
            utility(state.selection_counts[d.id], e_trans, e_train, state.efficiency_factor)
        })
        .collect()
}

fn by_score_then_id(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Cluster-balanced top-k: `⌈k/2⌉` best of the low cluster, `⌊k/2⌋` best of
/// the high cluster, any shortfall filled from the leftovers. Returns indices
/// in ascending order.
pub fn select_by_scores(scores: &[f64], is_high: &[bool], k: usize) -> Result<Vec<usize>> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::SelectionSize { k, n });
    }
    let cmp = by_score_then_id(scores);
    let mut low: Vec<usize> = (0..n).filter(|&i| !is_high[i]).collect();
    let mut high: Vec<usize> = (0..n).filter(|&i| is_high[i]).collect();
    low.sort_by(&cmp);
    high.sort_by(&cmp);

    let take_low = k.div_ceil(2).min(low.len());
    let take_high = (k / 2).min(high.len());
    let mut chosen: Vec<usize> = low[..take_low].iter().chain(&high[..take_high]).copied().collect();
    let mut rest: Vec<usize> = low[take_low..].iter().chain(&high[take_high..]).copied().collect();
    rest.sort_by(&cmp);
    chosen.extend(rest.into_iter().take(k - chosen.len()));
    chosen.sort_unstable();
    Ok(chosen)
}

/// Runs one round of the heuristic and charges φ for the chosen devices.
pub fn select_clients(
    fleet: &[Device],
    k: usize,
    split: &ClusterSplit,
    state: &mut SelectionPolicyState,
    env: &ChannelEnv,
) -> Result<Vec<usize>> {
    if k == 0 || k > fleet.len() {
        return Err(Error::SelectionSize { k, n: fleet.len() });
    }
    check_ids(fleet)?;
    if state.selection_counts.len() != fleet.len() {
        return Err(Error::ShapeMismatch("selection ledger length differs from fleet".into()));
    }
    let scores = score_devices(fleet, k, state, env)?;
    let is_high: Vec<bool> = fleet.iter().map(|d| split.is_high(d.id)).collect();
    let chosen = select_by_scores(&scores, &is_high, k)?;
    for &i in &chosen {
        state.selection_counts[i] += 1;
    }
    Ok(chosen)
}
