//! Hardware profiles and the per-device latency / energy model.
//!
//! Training:      `latency = I·C·|D|·cores / f`,  `energy = κ·I·C·|D|·f²·cores`
//! Communication: `rate = β·B·log2(1 + g²P/N0)`,   `energy = P·G / rate`
//! Relative:      `(E_train + E_trans) / (battery · δ)`

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, Stream};

const DEFAULT_PROFILES: &str = include_str!("profiles.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub category: String,
    /// Hz
    pub freq_min: f64,
    /// Hz
    pub freq_max: f64,
    pub cores: u32,
    pub price_band: String,
}

#[derive(Debug, Deserialize)]
struct ProfileFile {
    profile: Vec<ProfileRecord>,
}

#[derive(Debug, Deserialize)]
struct ProfileRecord {
    name: String,
    #[serde(default)]
    category: String,
    clock_min_ghz: f64,
    clock_max_ghz: f64,
    cores: u32,
    #[serde(default)]
    price_band: String,
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.freq_min >= 0.0 && self.freq_min <= self.freq_max && self.freq_max > 0.0) {
            return Err(Error::Parse(format!(
                "profile {:?}: need 0 <= freq_min <= freq_max, freq_max > 0",
                self.name
            )));
        }
        if self.cores == 0 {
            return Err(Error::Parse(format!("profile {:?}: cores must be >= 1", self.name)));
        }
        Ok(())
    }

    fn freq_mean(&self) -> f64 {
        0.5 * (self.freq_min + self.freq_max)
    }

    fn freq_sd(&self) -> f64 {
        (self.freq_max - self.freq_min) / 6.0
    }

    /// Draws a clock frequency from a normal centred on the range midpoint with
    /// `sd = range / 6`, truncated to the profile range (and to `f > 0`).
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sd = self.freq_sd();
        if sd <= 0.0 {
            return self.freq_max;
        }
        let normal = Normal::new(self.freq_mean(), sd).expect("positive sd");
        for _ in 0..1000 {
            let f = normal.sample(rng);
            if f >= self.freq_min && f <= self.freq_max && f > 0.0 {
                return f;
            }
        }
        self.freq_mean()
    }
}

/// Parses profiles from the TOML schema documented in `profiles.toml`.
pub fn parse_profiles(text: &str) -> Result<Vec<HardwareProfile>> {
    let file: ProfileFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let profiles: Vec<HardwareProfile> = file
        .profile
        .into_iter()
        .map(|r| HardwareProfile {
            name: r.name,
            category: r.category,
            freq_min: r.clock_min_ghz * 1e9,
            freq_max: r.clock_max_ghz * 1e9,
            cores: r.cores,
            price_band: r.price_band,
        })
        .collect();
    if profiles.is_empty() {
        return Err(Error::Parse("no [[profile]] records".into()));
    }
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

pub fn load_profiles(path: &Path) -> Result<Vec<HardwareProfile>> {
    parse_profiles(&std::fs::read_to_string(path)?)
}

/// The nine processor rows of the built-in device table.
pub fn default_profiles() -> Vec<HardwareProfile> {
    parse_profiles(DEFAULT_PROFILES).expect("embedded profiles are valid")
}

/// Shared channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEnv {
    /// Total bandwidth B, Hz.
    pub bandwidth: f64,
    /// Noise power N0 in the SNR denominator, W.
    pub noise_psd: f64,
    /// Upload payload G, bits.
    pub model_bits: f64,
}

impl ChannelEnv {
    pub fn new(bandwidth: f64, noise_psd: f64, model_bits: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && noise_psd > 0.0 && model_bits >= 0.0) {
            return Err(Error::InvalidArgument(
                "channel needs bandwidth > 0, noise > 0, model_bits >= 0".into(),
            ));
        }
        Ok(Self { bandwidth, noise_psd, model_bits })
    }

    /// `G = 32 bits × parameter count`.
    pub fn for_parameters(bandwidth: f64, noise_psd: f64, parameter_count: usize) -> Result<Self> {
        Self::new(bandwidth, noise_psd, 32.0 * parameter_count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommCost {
    pub energy: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub train_energy: f64,
    pub trans_energy: f64,
    pub train_latency: f64,
    pub trans_latency: f64,
    pub relative_energy: f64,
}

impl EnergyReport {
    pub fn total_energy(&self) -> f64 {
        self.train_energy + self.trans_energy
    }

    pub fn total_latency(&self) -> f64 {
        self.train_latency + self.trans_latency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: usize,
    pub profile: HardwareProfile,
    /// Effective capacitance κ, J·s²/cycle.
    pub kappa: f64,
    pub cycles_per_sample: f64,
    pub local_iterations: u32,
    pub dataset_size: usize,
    /// Current clock, Hz. Resampled every round.
    pub cpu_freq: f64,
    pub cores: u32,
    /// Transmit power, W.
    pub tx_power: f64,
    pub channel_gain: f64,
    /// Battery capacity, J.
    pub battery_capacity: f64,
    /// Energy sensitivity δ in (0, 1].
    pub sensitivity: f64,
    pub cumulative_energy: f64,
    pub selection_count: u32,
}

impl Device {
    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidDevice { id: self.id, reason: reason.into() }
    }

    /// Work in CPU cycles: `I·C·|D|`.
    pub fn workload_cycles(&self) -> f64 {
        self.local_iterations as f64 * self.cycles_per_sample * self.dataset_size as f64
    }

    pub fn training_latency(&self) -> Result<f64> {
        if !(self.cpu_freq > 0.0) {
            return Err(self.invalid("cpu frequency must be positive"));
        }
        Ok(self.workload_cycles() * self.cores as f64 / self.cpu_freq)
    }

    pub fn training_energy(&self) -> f64 {
        self.kappa * self.workload_cycles() * self.cpu_freq * self.cpu_freq * self.cores as f64
    }

    /// Spectral efficiency `log2(1 + g²P/N0)`, bits/s/Hz.
    pub fn spectral_efficiency(&self, env: &ChannelEnv) -> f64 {
        let snr = self.channel_gain * self.channel_gain * self.tx_power / env.noise_psd;
        snr.ln_1p() / std::f64::consts::LN_2
    }

    pub fn comm_rate(&self, beta: f64, env: &ChannelEnv) -> Result<f64> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidAllocation(format!(
                "device {}: beta {beta} outside (0, 1]",
                self.id
            )));
        }
        Ok(beta * env.bandwidth * self.spectral_efficiency(env))
    }

    pub fn comm_energy(&self, beta: f64, env: &ChannelEnv) -> Result<CommCost> {
        let rate = self.comm_rate(beta, env)?;
        if env.model_bits == 0.0 {
            return Ok(CommCost { energy: 0.0, latency: 0.0 });
        }
        if !(rate > 0.0) {
            return Err(Error::InfeasibleTransmission { id: self.id });
        }
        let latency = env.model_bits / rate;
        Ok(CommCost { energy: self.tx_power * latency, latency })
    }

    pub fn relative_energy(&self, train_energy: f64, trans_energy: f64) -> Result<f64> {
        let denom = self.battery_capacity * self.sensitivity;
        if !(denom > 0.0) {
            return Err(self.invalid("battery capacity and sensitivity must be positive"));
        }
        Ok((train_energy + trans_energy) / denom)
    }

    /// Relative energy of everything consumed so far.
    pub fn cumulative_relative_energy(&self) -> f64 {
        self.cumulative_energy / (self.battery_capacity * self.sensitivity)
    }

    /// Evaluates the full model at allocation `beta`.
    pub fn energy_report(&self, beta: f64, env: &ChannelEnv) -> Result<EnergyReport> {
        let train_latency = self.training_latency()?;
        let train_energy = self.training_energy();
        let comm = self.comm_energy(beta, env)?;
        Ok(EnergyReport {
            train_energy,
            trans_energy: comm.energy,
            train_latency,
            trans_latency: comm.latency,
            relative_energy: self.relative_energy(train_energy, comm.energy)?,
        })
    }

    /// Ledger mode: charges the device for one round of participation.
    pub fn record_participation(&mut self, report: &EnergyReport) {
        self.cumulative_energy += report.total_energy();
        self.selection_count += 1;
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("cycles_per_sample", self.cycles_per_sample),
            ("cpu_freq", self.cpu_freq),
            ("tx_power", self.tx_power),
            ("battery_capacity", self.battery_capacity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(self.invalid(format!("{name} must be positive and finite")));
            }
        }
        if self.channel_gain < 0.0 || !self.channel_gain.is_finite() {
            return Err(self.invalid("channel gain must be non-negative"));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity <= 1.0) {
            return Err(self.invalid("sensitivity must lie in (0, 1]"));
        }
        if self.cores == 0 || self.local_iterations == 0 {
            return Err(self.invalid("cores and local iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Distribution parameters for the per-device constants the device table
/// does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetParams {
    pub kappa: f64,
    pub cycles_per_sample: [f64; 2],
    pub local_iterations: u32,
    pub tx_power_w: [f64; 2],
    /// Range of g² (uniform).
    pub gain_sq: [f64; 2],
    pub battery_j: [f64; 2],
    pub sensitivity_mean: f64,
    pub sensitivity_sd: f64,
    /// Draws below this floor are rejected.
    pub sensitivity_floor: f64,
}

impl Default for FleetParams {
    fn default() -> Self {
        Self {
            kappa: 1e-28,
            cycles_per_sample: [5e4, 2e5],
            local_iterations: 5,
            tx_power_w: [0.2, 1.0],
            gain_sq: [0.1, 1.0],
            battery_j: [5e3, 5e4],
            sensitivity_mean: 0.5,
            sensitivity_sd: 0.15,
            sensitivity_floor: 0.05,
        }
    }
}

impl FleetParams {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("cycles_per_sample", self.cycles_per_sample),
            ("tx_power_w", self.tx_power_w),
            ("gain_sq", self.gain_sq),
            ("battery_j", self.battery_j),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("fleet.{name}: need 0 < lo <= hi")));
            }
        }
        if !(self.kappa >= 0.0) || self.local_iterations == 0 {
            return Err(Error::Config("fleet: kappa >= 0 and local_iterations >= 1".into()));
        }
        if !(self.sensitivity_floor > 0.0
            && self.sensitivity_floor < 1.0
            && self.sensitivity_sd >= 0.0
            && self.sensitivity_mean > self.sensitivity_floor
            && self.sensitivity_mean <= 1.0)
        {
            return Err(Error::Config("fleet: invalid sensitivity distribution".into()));
        }
        Ok(())
    }

    fn sample_sensitivity<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sensitivity_sd == 0.0 {
            return self.sensitivity_mean;
        }
        let normal = Normal::new(self.sensitivity_mean, self.sensitivity_sd).expect("sd >= 0");
        loop {
            let d = normal.sample(rng);
            if d >= self.sensitivity_floor && d <= 1.0 {
                return d;
            }
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Samples a fleet with the default per-device parameter distributions.
pub fn sample_fleet(profiles: &[HardwareProfile], n: usize, seed: u64) -> Result<Vec<Device>> {
    sample_fleet_with(profiles, n, seed, &FleetParams::default())
}

/// Profiles are assigned round-robin (`id mod profiles.len()`); everything
/// else is drawn from a stream keyed by `seed`. Dataset sizes start at 1 and
/// are set later by the data partitioner.
pub fn sample_fleet_with(
    profiles: &[HardwareProfile],
    n: usize,
    seed: u64,
    params: &FleetParams,
) -> Result<Vec<Device>> {
    if n == 0 || profiles.is_empty() {
        return Err(Error::EmptyFleet);
    }
    params.validate()?;
    let mut rng = stream_rng(seed, Stream::Fleet, 0);
    let mut fleet = Vec::with_capacity(n);
    for id in 0..n {
        let profile = profiles[id % profiles.len()].clone();
        let cpu_freq = profile.sample_frequency(&mut rng);
        let cycles_per_sample = uniform(&mut rng, params.cycles_per_sample);
        let tx_power = uniform(&mut rng, params.tx_power_w);
        let channel_gain = uniform(&mut rng, params.gain_sq).sqrt();
        let battery_capacity = uniform(&mut rng, params.battery_j);
        let sensitivity = params.sample_sensitivity(&mut rng);
        fleet.push(Device {
            id,
            cores: profile.cores,
            profile,
            kappa: params.kappa,
            cycles_per_sample,
            local_iterations: params.local_iterations,
            dataset_size: 1,
            cpu_freq,
            tx_power,
            channel_gain,
            battery_capacity,
            sensitivity,
            cumulative_energy: 0.0,
            selection_count: 0,
        });
    }
    Ok(fleet)
}

/// Redraws every device's clock for `round`; pure function of `(seed, round, id)`.
pub fn resample_frequencies(fleet: &mut [Device], seed: u64, round: u64) {
    let mut rng: SimRng = stream_rng(seed, Stream::Frequency, round);
    for d in fleet.iter_mut() {
        d.cpu_freq = d.profile.sample_frequency(&mut rng);
    }
}

/// Hand-built devices for tests and examples.
#[doc(hidden)]
pub mod tests_support {
    use super::*;

    pub fn unit_profile() -> HardwareProfile {
        HardwareProfile {
            name: "unit".into(),
            category: String::new(),
            freq_min: 1.0,
            freq_max: 1.0,
            cores: 1,
            price_band: String::new(),
        }
    }

    pub fn bare(iters: u32, cycles: f64, size: usize, freq: f64, cores: u32) -> Device {
        Device {
            id: 0,
            profile: unit_profile(),
            kappa: 1e-28,
            cycles_per_sample: cycles,
            local_iterations: iters,
            dataset_size: size,
            cpu_freq: freq,
            cores,
            tx_power: 0.5,
            channel_gain: 1.0,
            battery_capacity: 1000.0,
            sensitivity: 1.0,
            cumulative_energy: 0.0,
            selection_count: 0,
        }
    }

    pub fn unit_device(tx_power: f64, channel_gain: f64) -> Device {
        Device { tx_power, channel_gain, ..bare(1, 1.0, 1, 1.0, 1) }
    }
}
