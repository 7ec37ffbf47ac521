use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qnet::{q_scores, Optimizer, QNetwork};
use super::replay::Transition;
use crate::error::{Error, Result};

/// Binary participation vector with exactly `k` ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector {
    pub bits: Vec<u8>,
    pub k: usize,
}

impl ActionVector {
    pub fn from_selected(n: usize, selected: &[usize]) -> Result<Self> {
        let mut bits = vec![0u8; n];
        for &i in selected {
            if i >= n || bits[i] == 1 {
                return Err(Error::InvalidArgument(format!("bad selection index {i} for {n} devices")));
            }
            bits[i] = 1;
        }
        Ok(Self { bits, k: selected.len() })
    }

    pub fn selected(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, b)| **b == 1).map(|(i, _)| i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ones = self.bits.iter().filter(|b| **b == 1).count();
        if ones != self.k || self.bits.iter().any(|b| *b > 1) {
            return Err(Error::ShapeMismatch(format!("action has {ones} ones, expected {}", self.k)));
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores, ties to the lower index; ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// ε-greedy over per-device scores: greedy top-k with probability `1 − ε`,
/// otherwise `k` devices uniformly without replacement.
pub fn select_action<R: Rng + ?Sized>(scores: &[f64], k: usize, epsilon: f64, rng: &mut R) -> Result<ActionVector> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::SelectionSize { k, n });
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let explore = rng.random::<f64>() < epsilon;
    let chosen = if explore {
        let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
        idx.sort_unstable();
        idx
    } else {
        top_k(scores, k)
    };
    ActionVector::from_selected(n, &chosen)
}

/// TD target `r + γ · Σ_{i ∈ top-k(target)} Q'(s'_i)` for one transition.
pub fn td_target(target: &QNetwork, t: &Transition, discount: f64) -> f64 {
    if discount == 0.0 {
        return t.reward;
    }
    let next = q_scores(target, &t.next_state);
    let best: f64 = top_k(&next, t.action.k).iter().map(|&i| next[i]).sum();
    t.reward + discount * best
}

/// Mean squared TD error over `batch` and its gradient w.r.t. the main
/// network. The prediction for a transition is `Σ_{i : a_i = 1} Q(s_i)`.
pub fn td_loss_and_grad(
    main: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    discount: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty TD batch".into()));
    }
    let mut grad = vec![0.0; main.params().len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for t in batch {
        t.validate()?;
        if t.state.iter().any(|s| s.len() != main.input_dim()) {
            return Err(Error::ShapeMismatch("state width differs from network input".into()));
        }
        let y = td_target(target, t, discount);
        let selected = t.action.selected();
        let pred: f64 = selected.iter().map(|&i| main.forward(&t.state[i])).sum();
        let err = y - pred;
        loss += err * err * scale;
        for &i in &selected {
            main.accumulate_grad(&t.state[i], -2.0 * err * scale, &mut grad);
        }
    }
    Ok((loss, grad))
}

/// One optimizer step on the batch; returns the loss before the step.
pub fn td_update(
    main: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    discount: f64,
    opt: &mut Optimizer,
) -> Result<f64> {
    if batch.iter().any(|t| t.state.len() != batch[0].state.len()) {
        return Err(Error::ShapeMismatch("transitions in a batch differ in fleet size".into()));
    }
    let (loss, grad) = td_loss_and_grad(main, target, batch, discount)?;
    opt.step(main.params_mut(), &grad);
    Ok(loss)
}

/// Copies main into target when `round` is a multiple of `every`.
pub fn sync_target(main: &QNetwork, target: &mut QNetwork, round: u64, every: u64) -> Result<bool> {
    if every == 0 {
        return Err(Error::InvalidArgument("target sync period must be >= 1".into()));
    }
    if round.is_multiple_of(every) {
        target.copy_from(main);
        Ok(true)
    } else {
        Ok(false)
    }
}
