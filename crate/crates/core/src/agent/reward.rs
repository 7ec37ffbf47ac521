use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Penalty thresholds (latency s, energy J, variance) and tolerance exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub latency_threshold: f64,
    pub energy_threshold: f64,
    pub variance_threshold: f64,
    pub latency_exponent: f64,
    pub energy_exponent: f64,
    pub variance_exponent: f64,
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let thresholds = [self.latency_threshold, self.energy_threshold, self.variance_threshold];
        if thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidArgument("reward thresholds must be positive".into()));
        }
        let exps = [self.latency_exponent, self.energy_exponent, self.variance_exponent];
        if exps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidArgument("reward exponents must be >= 0".into()));
        }
        Ok(())
    }
}

/// `(threshold / measured)^exponent` when `measured > threshold`, else 1.
pub fn penalty_factor(threshold: f64, measured: f64, exponent: f64) -> f64 {
    if measured > threshold {
        (threshold / measured).powf(exponent)
    } else {
        1.0
    }
}

/// Accuracy gain scaled by the product of the three penalty factors.
///
/// For a negative gain the product divides instead, so a violated threshold
/// always makes the reward worse.
pub fn reward(delta_acc: f64, latency: f64, energy: f64, variance: f64, p: &RewardParams) -> Result<f64> {
    p.validate()?;
    if !(latency > 0.0 && energy > 0.0 && variance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "measured latency/energy/variance must be positive ({latency}, {energy}, {variance})"
        )));
    }
    let factor = penalty_factor(p.latency_threshold, latency, p.latency_exponent)
        * penalty_factor(p.energy_threshold, energy, p.energy_exponent)
        * penalty_factor(p.variance_threshold, variance, p.variance_exponent);
    Ok(if delta_acc >= 0.0 { delta_acc * factor } else { delta_acc / factor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(t: f64, e: f64, v: f64) -> RewardParams {
        RewardParams {
            latency_threshold: t,
            energy_threshold: e,
            variance_threshold: v,
            latency_exponent: 1.0,
            energy_exponent: 1.0,
            variance_exponent: 1.0,
        }
    }

    #[test]
    fn examples() {
        let p = params(100.0, 10.0, 1.0);
        assert_eq!(reward(0.02, 50.0, 5.0, 0.5, &p).unwrap(), 0.02);
        assert_relative_eq!(reward(0.02, 200.0, 5.0, 0.5, &p).unwrap(), 0.01, max_relative = 1e-12);
        assert_relative_eq!(reward(0.04, 200.0, 20.0, 2.0, &p).unwrap(), 0.005, max_relative = 1e-12);
        assert_eq!(reward(0.02, 100.0, 10.0, 1.0, &p).unwrap(), 0.02);
    }

    #[test]
    fn negative_gain_is_amplified_by_violations() {
        let p = params(100.0, 10.0, 1.0);
        let clean = reward(-0.02, 50.0, 5.0, 0.5, &p).unwrap();
        let violated = reward(-0.02, 200.0, 5.0, 0.5, &p).unwrap();
        assert_eq!(clean, -0.02);
        assert_relative_eq!(violated, -0.04, max_relative = 1e-12);
    }

    #[test]
    fn errors() {
        let p = params(1.0, 1.0, 1.0);
        assert!(reward(0.1, 0.0, 1.0, 1.0, &p).is_err());
        assert!(reward(0.1, 1.0, -1.0, 1.0, &p).is_err());
        assert!(reward(0.1, 1.0, 1.0, 1.0, &params(0.0, 1.0, 1.0)).is_err());
    }
}
