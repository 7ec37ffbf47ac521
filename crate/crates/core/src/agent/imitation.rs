use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::learn::{top_k, ActionVector};
use super::qnet::{q_scores, Optimizer, QNetwork};
use crate::error::{Error, Result};

/// One heuristic decision: standardized fleet state and the chosen set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub action: ActionVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImitationConfig {
    pub epochs: usize,
    /// Trajectories per optimizer step; 0 means the whole set.
    pub batch_size: usize,
    pub margin: f64,
    pub shuffle: bool,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self { epochs: 40, batch_size: 8, margin: 1.0, shuffle: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationReport {
    /// Mean hinge loss over the training set, measured before each epoch and
    /// once after the last.
    pub epoch_losses: Vec<f64>,
    pub agreement: f64,
}

/// Pairwise ranking hinge for one decision,
/// `Σ_{c chosen, u unchosen} max(0, margin − (s_c − s_u))`, averaged over the
/// pairs. Zero exactly when the lowest chosen score beats the highest
/// unchosen one by at least `margin`. Returns the loss and `∂loss/∂s`.
pub fn ranking_hinge(scores: &[f64], action: &ActionVector, margin: f64) -> (f64, Vec<f64>) {
    let chosen = action.selected();
    let unchosen: Vec<usize> = (0..scores.len()).filter(|i| action.bits[*i] == 0).collect();
    let mut d = vec![0.0; scores.len()];
    if chosen.is_empty() || unchosen.is_empty() {
        return (0.0, d);
    }
    let pairs = (chosen.len() * unchosen.len()) as f64;
    let mut loss = 0.0;
    for &c in &chosen {
        for &u in &unchosen {
            let slack = margin - (scores[c] - scores[u]);
            if slack > 0.0 {
                loss += slack;
                d[c] -= 1.0;
                d[u] += 1.0;
            }
        }
    }
    d.iter_mut().for_each(|x| *x /= pairs);
    (loss / pairs, d)
}

fn validate(net: &QNetwork, set: &[Trajectory]) -> Result<()> {
    for t in set {
        t.action.validate()?;
        if t.action.bits.len() != t.states.len() || t.states.iter().any(|s| s.len() != net.input_dim()) {
            return Err(Error::ShapeMismatch("trajectory does not match network input".into()));
        }
    }
    Ok(())
}

pub fn mean_hinge(net: &QNetwork, set: &[Trajectory], margin: f64) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    set.iter().map(|t| ranking_hinge(&q_scores(net, &t.states), &t.action, margin).0).sum::<f64>() / set.len() as f64
}

/// Mean `|greedy top-k ∩ chosen| / k`, in `[0, 1]`.
pub fn agreement(net: &QNetwork, set: &[Trajectory]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    set.iter()
        .map(|t| {
            let picked = top_k(&q_scores(net, &t.states), t.action.k);
            let hits = picked.iter().filter(|&&i| t.action.bits[i] == 1).count();
            hits as f64 / t.action.k.max(1) as f64
        })
        .sum::<f64>()
        / set.len() as f64
}

/// Supervised warm start: fits the network's per-device scores to rank the
/// heuristic's chosen devices above the rest, then reports top-k agreement on
/// `holdout`.
pub fn pretrain_imitation<R: Rng + ?Sized>(
    net: &mut QNetwork,
    train: &[Trajectory],
    holdout: &[Trajectory],
    cfg: &ImitationConfig,
    opt: &mut Optimizer,
    rng: &mut R,
) -> Result<ImitationReport> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("no imitation trajectories".into()));
    }
    validate(net, train)?;
    validate(net, holdout)?;
    let batch = if cfg.batch_size == 0 { train.len() } else { cfg.batch_size };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs + 1);
    let mut grad = vec![0.0; net.params().len()];
    for _ in 0..cfg.epochs {
        epoch_losses.push(mean_hinge(net, train, cfg.margin));
        if cfg.shuffle {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &j in chunk {
                let t = &train[j];
                let scores = q_scores(net, &t.states);
                let (_, d) = ranking_hinge(&scores, &t.action, cfg.margin);
                for (s, ds) in t.states.iter().zip(&d) {
                    net.accumulate_grad(s, ds * scale, &mut grad);
                }
            }
            opt.step(net.params_mut(), &grad);
        }
    }
    epoch_losses.push(mean_hinge(net, train, cfg.margin));
    let eval = if holdout.is_empty() { train } else { holdout };
    Ok(ImitationReport { epoch_losses, agreement: agreement(net, eval) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn dominant_choices_have_zero_loss() {
        // A 1-input linear network scoring by the feature itself.
        let net = QNetwork::from_params(&[1, 1], vec![1.0, 0.0]).unwrap();
        let t = Trajectory {
            states: vec![vec![5.0], vec![0.0], vec![4.0], vec![1.0]],
            action: ActionVector::from_selected(4, &[0, 2]).unwrap(),
        };
        assert_eq!(mean_hinge(&net, std::slice::from_ref(&t), 1.0), 0.0);
        assert_eq!(agreement(&net, &[t]), 1.0);
    }

    #[test]
    fn hinge_gradient_matches_finite_differences() {
        let scores = [0.3, -0.2, 0.9, 0.05, 1.7];
        let action = ActionVector::from_selected(5, &[1, 3]).unwrap();
        let (_, d) = ranking_hinge(&scores, &action, 1.0);
        for i in 0..5 {
            let mut p = scores;
            p[i] += 1e-6;
            let mut m = scores;
            m[i] -= 1e-6;
            let fd = (ranking_hinge(&p, &action, 1.0).0 - ranking_hinge(&m, &action, 1.0).0) / 2e-6;
            assert!((fd - d[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn learns_a_linear_ranking() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let make = |rng: &mut rand_chacha::ChaCha8Rng| {
            let states: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let scores: Vec<f64> = states.iter().map(|s| s[0] - 0.5 * s[1]).collect();
            let action = ActionVector::from_selected(12, &top_k(&scores, 3)).unwrap();
            Trajectory { states, action }
        };
        let train: Vec<_> = (0..200).map(|_| make(&mut rng)).collect();
        let hold: Vec<_> = (0..50).map(|_| make(&mut rng)).collect();
        let mut net = QNetwork::new(&[2, 8, 1], &mut rng).unwrap();
        let cfg = ImitationConfig { epochs: 30, ..Default::default() };
        let report = pretrain_imitation(&mut net, &train, &hold, &cfg, &mut Optimizer::adam(3e-3), &mut rng).unwrap();
        assert!(report.agreement > 0.9, "{}", report.agreement);
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        assert!((0.0..=1.0).contains(&report.agreement));
    }

    #[test]
    fn empty_training_set_rejected() {
        let mut net = QNetwork::zeros(&[1, 1]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let r = pretrain_imitation(&mut net, &[], &[], &ImitationConfig::default(), &mut Optimizer::sgd(0.1), &mut rng);
        assert!(r.is_err());
    }
}
