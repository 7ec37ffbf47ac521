use serde::{Deserialize, Serialize};

use crate::device::{ChannelEnv, Device};
use crate::error::{Error, Result};

pub const FEATURES: usize = 7;

/// Raw per-device observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub train_latency: f64,
    pub trans_latency: f64,
    pub train_energy: f64,
    pub trans_energy: f64,
    /// Cumulative energy since the start of training, J.
    pub total_energy: f64,
    pub loss: f64,
    pub data_size: f64,
}

impl DeviceState {
    pub fn to_features(&self) -> [f64; FEATURES] {
        [
            self.train_latency,
            self.trans_latency,
            self.train_energy,
            self.trans_energy,
            self.total_energy,
            self.loss,
            self.data_size,
        ]
    }
}

/// What a participant reported in the round it trained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub train_latency: f64,
    pub trans_latency: f64,
    pub train_energy: f64,
    pub trans_energy: f64,
    pub loss: f64,
}

/// Energy-model prediction with a uniform share `β = 1/k`.
pub fn predict_observation(d: &Device, k: usize, env: &ChannelEnv, loss: f64) -> Result<Observation> {
    let comm = d.comm_energy(1.0 / k as f64, env)?;
    Ok(Observation {
        train_latency: d.training_latency()?,
        trans_latency: comm.latency,
        train_energy: d.training_energy(),
        trans_energy: comm.energy,
        loss,
    })
}

/// Builds the fleet observation. Devices with an entry in `last_round` (the
/// previous round's participants) carry their measurements; all others are
/// predicted by the energy model at the current clock. A device's loss is
/// its most recent local training loss, or `global_loss` if it never trained.
pub fn build_state(
    fleet: &[Device],
    last_round: &[Option<Observation>],
    last_losses: &[Option<f64>],
    global_loss: f64,
    k: usize,
    env: &ChannelEnv,
) -> Result<Vec<DeviceState>> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    if last_round.len() != fleet.len() || last_losses.len() != fleet.len() {
        return Err(Error::ShapeMismatch("state inputs must have one entry per device".into()));
    }
    fleet
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let obs = match last_round[i] {
                Some(obs) => obs,
                None => predict_observation(d, k, env, last_losses[i].unwrap_or(global_loss))?,
            };
            Ok(DeviceState {
                train_latency: obs.train_latency,
                trans_latency: obs.trans_latency,
                train_energy: obs.train_energy,
                trans_energy: obs.trans_energy,
                total_energy: d.cumulative_energy,
                loss: obs.loss,
                data_size: d.dataset_size as f64,
            })
        })
        .collect()
}

/// Log-scaled features. Energies and latencies span orders of magnitude
/// across hardware classes, and the heuristic's preference is a ratio of
/// energies, so the network sees `ln(x + ε)`. The cumulative-energy offset
/// is the fleet's cheapest single-round energy, which keeps never-selected
/// devices one participation below everyone else; other offsets are
/// `1e-6 ×` the fleet maximum of the feature.
pub fn log_features(states: &[DeviceState]) -> Vec<[f64; FEATURES]> {
    let rows: Vec<[f64; FEATURES]> = states.iter().map(DeviceState::to_features).collect();
    let mut eps = [1.0; FEATURES];
    for j in 0..FEATURES {
        let max = rows.iter().map(|r| r[j]).fold(0.0, f64::max);
        if max > 0.0 {
            eps[j] = 1e-6 * max;
        }
    }
    let cheapest = states.iter().map(|s| s.train_energy + s.trans_energy).fold(f64::INFINITY, f64::min);
    if cheapest > 0.0 && cheapest.is_finite() {
        eps[4] = cheapest;
    }
    rows.iter().map(|r| std::array::from_fn(|j| (r[j].max(0.0) + eps[j]).ln())).collect()
}

/// Per-feature running mean and variance (Welford) over every device row
/// seen so far; each call folds the new rows in before scaling them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub count: f64,
    pub mean: [f64; FEATURES],
    pub m2: [f64; FEATURES],
}

impl Default for Standardizer {
    fn default() -> Self {
        Self { count: 0.0, mean: [0.0; FEATURES], m2: [0.0; FEATURES] }
    }
}

impl Standardizer {
    pub fn update(&mut self, rows: &[[f64; FEATURES]]) {
        for r in rows {
            self.count += 1.0;
            for j in 0..FEATURES {
                let d = r[j] - self.mean[j];
                self.mean[j] += d / self.count;
                self.m2[j] += d * (r[j] - self.mean[j]);
            }
        }
    }

    /// z-scores under the current statistics; features with no spread map to 0.
    pub fn apply(&self, rows: &[[f64; FEATURES]]) -> Vec<Vec<f64>> {
        let sd: [f64; FEATURES] = std::array::from_fn(|j| {
            if self.count > 0.0 { (self.m2[j] / self.count).sqrt() } else { 0.0 }
        });
        rows.iter()
            .map(|r| {
                (0..FEATURES)
                    .map(|j| if sd[j] > 1e-9 * (1.0 + self.mean[j].abs()) { (r[j] - self.mean[j]) / sd[j] } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub fn standardize(&mut self, states: &[DeviceState]) -> Vec<Vec<f64>> {
        let rows = log_features(states);
        self.update(&rows);
        self.apply(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{default_profiles, sample_fleet};

    fn setup() -> (Vec<Device>, ChannelEnv) {
        let mut fleet = sample_fleet(&default_profiles(), 12, 4).unwrap();
        for (i, d) in fleet.iter_mut().enumerate() {
            d.dataset_size = 10 + 7 * i;
        }
        (fleet, ChannelEnv::for_parameters(1e7, 1e-3, 1000).unwrap())
    }

    #[test]
    fn round_zero_is_all_predicted() {
        let (fleet, env) = setup();
        let states = build_state(&fleet, &vec![None; fleet.len()], &vec![None; fleet.len()], 0.69, 4, &env).unwrap();
        for (s, d) in states.iter().zip(&fleet) {
            let p = predict_observation(d, 4, &env, 0.69).unwrap();
            assert_eq!(s.train_energy, p.train_energy);
            assert_eq!(s.trans_energy, p.trans_energy);
            assert_eq!(s.loss, 0.69);
            assert_eq!(s.total_energy, 0.0);
        }
    }

    #[test]
    fn participants_carry_measurements() {
        let (fleet, env) = setup();
        let mut last = vec![None; fleet.len()];
        let measured = Observation { train_latency: 1.0, trans_latency: 2.0, train_energy: 3.0, trans_energy: 4.0, loss: 0.1 };
        last[3] = Some(measured);
        let mut losses = vec![None; fleet.len()];
        losses[5] = Some(0.25);
        let states = build_state(&fleet, &last, &losses, 0.69, 4, &env).unwrap();
        assert_eq!(states[3].trans_energy, 4.0);
        assert_eq!(states[3].loss, 0.1);
        assert_eq!(states[5].loss, 0.25);
        assert_eq!(states[0].loss, 0.69);
    }

    #[test]
    fn standardized_features_are_centred() {
        let (fleet, env) = setup();
        let states = build_state(&fleet, &vec![None; fleet.len()], &vec![None; fleet.len()], 0.69, 4, &env).unwrap();
        let z = Standardizer::default().standardize(&states);
        for j in 0..FEATURES {
            let mean: f64 = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
            assert!(mean.abs() < 1e-9, "feature {j} mean {mean}");
        }
        // The loss column is constant here.
        assert!(z.iter().all(|r| r[5] == 0.0));
        assert!(z.iter().all(|r| r[4] == 0.0));
    }

    #[test]
    fn running_statistics_match_batch() {
        let rows: Vec<[f64; FEATURES]> = (0..30).map(|i| std::array::from_fn(|j| (i * (j + 1)) as f64 % 7.0)).collect();
        let mut st = Standardizer::default();
        st.update(&rows[..11]);
        st.update(&rows[11..]);
        for j in 0..FEATURES {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / 30.0;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 30.0;
            assert!((st.mean[j] - mean).abs() < 1e-12);
            assert!((st.m2[j] / 30.0 - var).abs() < 1e-12);
        }
    }

    #[test]
    fn log_features_are_finite_and_monotone() {
        let (fleet, env) = setup();
        let states = build_state(&fleet, &vec![None; fleet.len()], &vec![None; fleet.len()], 0.69, 4, &env).unwrap();
        let f = log_features(&states);
        assert!(f.iter().flatten().all(|x| x.is_finite()));
        for i in 0..states.len() {
            for k in 0..states.len() {
                if states[i].train_energy < states[k].train_energy {
                    assert!(f[i][2] < f[k][2]);
                }
            }
        }
    }
}
