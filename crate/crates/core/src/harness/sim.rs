use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Partition, PolicyKind, RunConfig};
use super::policy::{policy_heuristic, policy_loss_weighted, policy_proximal, policy_random, policy_rl};
use crate::agent::{
    build_state, reward, ActionVector, Agent, ImitationReport,
    Observation, RewardParams, Standardizer, Trajectory, Transition,
};
use crate::alloc::{solve, AllocationProblem};
use crate::device::{
    default_profiles, load_profiles, resample_frequencies, sample_fleet_with, ChannelEnv, Device,
    EnergyReport,
};
use crate::error::{Error, Result};
use crate::fl::{
    aggregate, evaluate, load_csv_dataset, local_train, local_train_proximal, partition_dirichlet,
    partition_iid, ClientDataset, Model,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::selection::{cluster_by_ideal_energy, select_clients, ClusterSplit, SelectionPolicyState};

/// One participant's costs in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub id: usize,
    pub beta: f64,
    pub cpu_freq: f64,
    pub train_latency: f64,
    pub trans_latency: f64,
    pub train_energy: f64,
    pub trans_energy: f64,
    pub local_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    /// Total joules spent by this round's participants.
    pub energy_j: f64,
    /// Wall-clock of the round: the slowest participant.
    pub latency_s: f64,
    /// Population variance of cumulative relative energy across the fleet.
    pub variance: f64,
    pub selected: Vec<usize>,
    pub betas: Vec<f64>,
    /// Per-device cumulative relative energy after the round.
    pub relative_energies: Vec<f64>,
    /// Per-device cumulative joules after the round.
    pub cumulative_energies: Vec<f64>,
    pub clients: Vec<ClientRecord>,
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub seed: u64,
    pub rounds_run: usize,
    pub final_accuracy: f64,
    pub final_loss: f64,
    /// First round reaching the target accuracy; null if never reached.
    pub rounds_to_target: Option<usize>,
    pub total_energy_j: f64,
    /// Sum of the per-device ledgers; equals `total_energy_j`.
    pub ledger_energy_j: f64,
    pub energy_variance: f64,
    pub max_relative_energy: f64,
    pub cumulative_latency_s: f64,
    pub time_limit_s: f64,
    pub feasible: bool,
    pub imitation_agreement: Option<f64>,
}

pub struct RunOutcome {
    /// The configuration as run, with calibrated reward thresholds filled in.
    pub config: RunConfig,
    pub summary: RunSummary,
    pub log: Vec<RoundMetrics>,
    pub devices: Vec<Device>,
    pub env: ChannelEnv,
    pub pretrain: Option<ImitationReport>,
    /// Set when a round could not complete; the log holds the rounds before it.
    pub abort: Option<String>,
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Summary statistics recomputed from a round log. `initial` is the
/// `(accuracy, loss)` of the untrained model, used when the log is empty.
/// Policy, seed and imitation fields are left for the caller.
pub fn compute_summary(
    log: &[RoundMetrics],
    initial: (f64, f64),
    target_accuracy: f64,
    time_limit_s: f64,
) -> RunSummary {
    let last = log.last();
    let finals = last.map(|r| r.relative_energies.as_slice()).unwrap_or(&[]);
    let cumulative_latency_s: f64 = log.iter().map(|r| r.latency_s).sum();
    RunSummary {
        policy: String::new(),
        seed: 0,
        rounds_run: log.len(),
        final_accuracy: last.map_or(initial.0, |r| r.accuracy),
        final_loss: last.map_or(initial.1, |r| r.loss),
        rounds_to_target: log.iter().find(|r| r.accuracy >= target_accuracy).map(|r| r.round),
        total_energy_j: log.iter().map(|r| r.energy_j).sum(),
        ledger_energy_j: last.map_or(0.0, |r| r.cumulative_energies.iter().sum()),
        energy_variance: population_variance(finals),
        max_relative_energy: finals.iter().cloned().fold(0.0, f64::max),
        cumulative_latency_s,
        time_limit_s,
        feasible: cumulative_latency_s <= time_limit_s,
        imitation_agreement: None,
    }
}

/// Everything fixed before round 1.
#[derive(Debug, Clone)]
pub struct Setup {
    pub fleet: Vec<Device>,
    pub clients: Vec<ClientDataset>,
    pub test: ClientDataset,
    pub env: ChannelEnv,
    pub split: ClusterSplit,
    pub model: Model,
}

pub fn build_setup(cfg: &RunConfig) -> Result<Setup> {
    cfg.validate()?;
    let profiles = match &cfg.profiles_path {
        Some(p) => load_profiles(p)?,
        None => default_profiles(),
    };
    let (train, test) = match (&cfg.data.train_path, &cfg.data.test_path) {
        (Some(tr), Some(te)) => (load_csv_dataset(tr)?, load_csv_dataset(te)?),
        _ => {
            let spec = &cfg.data.synthetic;
            let test_spec = crate::fl::SyntheticSpec { samples: cfg.data.test_samples, ..spec.clone() };
            (spec.generate(cfg.seed, 0)?, test_spec.generate(cfg.seed, 1)?)
        }
    };
    if train.dims != test.dims {
        return Err(Error::ShapeMismatch("train and test sets disagree in shape".into()));
    }
    let classes = train.classes.max(test.classes);
    let train = ClientDataset { classes, ..train };
    let test = ClientDataset { classes, ..test };
    let clients = match cfg.data.partition {
        Partition::Iid => partition_iid(&train, cfg.clients, cfg.seed)?,
        Partition::Dirichlet => partition_dirichlet(&train, cfg.clients, cfg.data.concentration, cfg.seed)?,
    };
    let model = Model::zeros(train.dims, classes);
    let payload = cfg.channel.payload_params.unwrap_or(model.parameter_count());
    let env = ChannelEnv::for_parameters(cfg.channel.bandwidth_hz, cfg.channel.noise_w, payload)?;
    let mut fleet = sample_fleet_with(&profiles, cfg.clients, cfg.seed, &cfg.fleet)?;
    for (d, ds) in fleet.iter_mut().zip(&clients) {
        d.dataset_size = ds.size();
    }
    resample_frequencies(&mut fleet, cfg.seed, 0);
    let split = cluster_by_ideal_energy(&fleet, &env)?;
    Ok(Setup { fleet, clients, test, env, split, model })
}

/// Offline imitation data: the heuristic driven for `rounds` rounds on a
/// copy of the fleet, with every state predicted by the energy model and
/// participation charged at the analytic allocation. The rounds are cut into
/// episodes of `episode` rounds (0 for one episode); each episode restarts
/// the energy ledger and selection counts, mirroring a fresh training run.
/// With probability `explore` a round executes a uniformly random selection
/// instead, still labelled with the heuristic's choice, so the recorded
/// states include over- and under-used devices. Selection counts track the
/// executed sets. States are scaled with `standardizer`, which keeps
/// accumulating statistics.
#[allow(clippy::too_many_arguments)]
pub fn heuristic_trajectories(
    standardizer: &mut Standardizer,
    fleet: &[Device],
    env: &ChannelEnv,
    k: usize,
    efficiency_factor: f64,
    rounds: usize,
    episode: usize,
    explore: f64,
    seed: u64,
    global_loss: f64,
) -> Result<Vec<Trajectory>> {
    if !(0.0..=1.0).contains(&explore) {
        return Err(Error::InvalidArgument("explore must lie in [0, 1]".into()));
    }
    let mut rng = stream_rng(seed, Stream::Pretrain, 1);
    let split = cluster_by_ideal_energy(fleet, env)?;
    let none_obs = vec![None; fleet.len()];
    let none_loss = vec![None; fleet.len()];
    let freq_seed = derive_seed(seed, Stream::Pretrain, 0);
    let episode = if episode == 0 { rounds.max(1) } else { episode };
    let mut out = Vec::with_capacity(rounds);
    let mut work = fleet.to_vec();
    let mut state = SelectionPolicyState::new(fleet.len(), efficiency_factor)?;
    for r in 0..rounds {
        if r % episode == 0 {
            work = fleet.to_vec();
            for d in &mut work {
                d.cumulative_energy = 0.0;
                d.selection_count = 0;
            }
            state = SelectionPolicyState::new(fleet.len(), efficiency_factor)?;
        }
        resample_frequencies(&mut work, freq_seed, r as u64 + 1);
        let states = build_state(&work, &none_obs, &none_loss, global_loss, k, env)?;
        let counts = state.selection_counts.clone();
        let chosen = select_clients(&work, k, &split, &mut state, env)?;
        let executed = if rng.random::<f64>() < explore {
            state.selection_counts = counts;
            let pick = policy_random(work.len(), k, &mut rng)?;
            pick.iter().for_each(|&i| state.selection_counts[i] += 1);
            pick
        } else {
            chosen.clone()
        };
        let problem = AllocationProblem::from_devices(executed.iter().map(|&i| &work[i]), env)?;
        let alloc = crate::alloc::solve_analytic(&problem)?;
        for (&i, &b) in executed.iter().zip(&alloc.betas) {
            let report = work[i].energy_report(b, env)?;
            work[i].record_participation(&report);
        }
        out.push(Trajectory {
            states: standardizer.standardize(&states),
            action: ActionVector::from_selected(fleet.len(), &chosen)?,
        });
    }
    Ok(out)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) }
}

/// Fills unset reward thresholds with `scale ×` the median per-round latency,
/// energy and variance of a short random-policy run on the same seed.
pub fn calibrate_reward(cfg: &RunConfig) -> Result<RewardParams> {
    let r = &cfg.reward;
    let (lat, en, var) = match (r.latency_threshold, r.energy_threshold, r.variance_threshold) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            let mut probe = cfg.clone();
            probe.policy = PolicyKind::Random;
            probe.rounds = r.calibration_rounds;
            probe.time_limit_s = f64::MAX;
            let out = run_experiment(&probe)?;
            if let Some(msg) = out.abort {
                return Err(Error::Config(format!("reward calibration failed: {msg}")));
            }
            let pick = |f: fn(&RoundMetrics) -> f64| {
                let mut v: Vec<f64> = out.log.iter().map(f).collect();
                r.calibration_scale * median(&mut v)
            };
            (
                r.latency_threshold.unwrap_or_else(|| pick(|m| m.latency_s)),
                r.energy_threshold.unwrap_or_else(|| pick(|m| m.energy_j)),
                r.variance_threshold.unwrap_or_else(|| pick(|m| m.variance)).max(f64::MIN_POSITIVE),
            )
        }
    };
    let p = RewardParams {
        latency_threshold: lat,
        energy_threshold: en,
        variance_threshold: var,
        latency_exponent: r.latency_exponent,
        energy_exponent: r.energy_exponent,
        variance_exponent: r.variance_exponent,
    };
    p.validate()?;
    Ok(p)
}

struct RlState {
    agent: Agent,
    params: RewardParams,
    /// Standardized state and action of the previous round, with its reward.
    pending: Option<(Vec<Vec<f64>>, ActionVector, f64)>,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs one configured experiment end to end.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    let Setup { mut fleet, clients, test, env, split, mut model } = build_setup(cfg)?;
    let mut config = cfg.clone();
    let n = cfg.clients;
    let k = cfg.per_round;
    let total = cfg.rounds as u64;
    let initial = evaluate(&model, &test)?;
    let pool = thread_pool(cfg.threads)?;

    let mut pretrain = None;
    let mut rl = if cfg.policy == PolicyKind::Rl {
        let params = calibrate_reward(cfg)?;
        config.reward.latency_threshold = Some(params.latency_threshold);
        config.reward.energy_threshold = Some(params.energy_threshold);
        config.reward.variance_threshold = Some(params.variance_threshold);
        let mut agent = Agent::new(cfg.agent.clone(), cfg.seed)?;
        if cfg.agent.pretrain_rounds > 0 {
            let traj = heuristic_trajectories(
                &mut agent.standardizer,
                &fleet,
                &env,
                k,
                cfg.efficiency_factor,
                cfg.agent.pretrain_rounds,
                cfg.rounds,
                cfg.agent.pretrain_explore,
                cfg.seed,
                initial.1,
            )?;
            // Every fifth trajectory is held out for the agreement check.
            let (hold, train): (Vec<_>, Vec<_>) = traj.into_iter().enumerate().partition(|(i, _)| i % 5 == 4);
            let train: Vec<Trajectory> = train.into_iter().map(|(_, t)| t).collect();
            let hold: Vec<Trajectory> = hold.into_iter().map(|(_, t)| t).collect();
            pretrain = Some(agent.pretrain(&train, &hold)?);
        }
        Some(RlState { agent, params, pending: None })
    } else {
        None
    };

    let mut heuristic_state = SelectionPolicyState::new(n, cfg.efficiency_factor)?;
    let mut policy_rng = stream_rng(cfg.seed, Stream::Policy, 0);
    let mut last_round: Vec<Option<Observation>> = vec![None; n];
    let mut last_losses: Vec<Option<f64>> = vec![None; n];
    let mut global = initial;
    let mut log: Vec<RoundMetrics> = Vec::with_capacity(cfg.rounds);
    let mut elapsed = 0.0;
    let mut abort = None;

    for h in 1..=cfg.rounds {
        let step = (|| -> Result<RoundMetrics> {
            resample_frequencies(&mut fleet, cfg.seed, h as u64);
            let selected = match cfg.policy {
                PolicyKind::Random => policy_random(n, k, &mut policy_rng)?,
                PolicyKind::Proximal => policy_proximal(n, k, &mut policy_rng)?,
                PolicyKind::LossWeighted => {
                    let losses: Vec<f64> = last_losses.iter().map(|l| l.unwrap_or(global.1)).collect();
                    policy_loss_weighted(&losses, k, &mut policy_rng)?
                }
                PolicyKind::Heuristic => policy_heuristic(&fleet, k, &split, &mut heuristic_state, &env)?,
                PolicyKind::Rl => {
                    let rl = rl.as_mut().expect("rl state");
                    let states = build_state(&fleet, &last_round, &last_losses, global.1, k, &env)?;
                    let z = rl.agent.standardizer.standardize(&states);
                    if let Some((state, action, r)) = rl.pending.take() {
                        rl.agent.observe(Transition { state, action, reward: r, next_state: z.clone() })?;
                        rl.agent.learn()?;
                    }
                    let action = policy_rl(&mut rl.agent, &z, k, h as u64, total)?;
                    let chosen = action.selected();
                    rl.pending = Some((z, action, 0.0));
                    chosen
                }
            };

            let problem = AllocationProblem::from_devices(selected.iter().map(|&i| &fleet[i]), &env)?;
            let alloc = solve(&problem, cfg.alloc.solver, cfg.alloc.tol, cfg.alloc.max_iter)?;
            let reports: Vec<EnergyReport> = selected
                .iter()
                .zip(&alloc.betas)
                .map(|(&i, &b)| fleet[i].energy_report(b, &env))
                .collect::<Result<_>>()?;

            let iters = &fleet;
            let trained: Vec<(Model, f64)> = pool.install(|| {
                selected
                    .par_iter()
                    .map(|&i| {
                        let it = iters[i].local_iterations;
                        if cfg.policy == PolicyKind::Proximal {
                            local_train_proximal(&model, &clients[i], it, cfg.train.lr, cfg.train.prox_mu)
                        } else {
                            local_train(&model, &clients[i], it, cfg.train.lr)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let sizes: Vec<usize> = selected.iter().map(|&i| clients[i].size()).collect();
            let models: Vec<Model> = trained.iter().map(|(m, _)| m.clone()).collect();
            let next = aggregate(&models, &sizes)?;

            let mut records = Vec::with_capacity(k);
            last_round.iter_mut().for_each(|o| *o = None);
            for ((&i, rep), ((_, l), &b)) in selected.iter().zip(&reports).zip(trained.iter().zip(&alloc.betas)) {
                fleet[i].record_participation(rep);
                last_losses[i] = Some(*l);
                last_round[i] = Some(Observation {
                    train_latency: rep.train_latency,
                    trans_latency: rep.trans_latency,
                    train_energy: rep.train_energy,
                    trans_energy: rep.trans_energy,
                    loss: *l,
                });
                records.push(ClientRecord {
                    id: i,
                    beta: b,
                    cpu_freq: fleet[i].cpu_freq,
                    train_latency: rep.train_latency,
                    trans_latency: rep.trans_latency,
                    train_energy: rep.train_energy,
                    trans_energy: rep.trans_energy,
                    local_loss: *l,
                });
            }
            model = next;
            let (accuracy, loss) = evaluate(&model, &test)?;
            let relative_energies: Vec<f64> = fleet.iter().map(Device::cumulative_relative_energy).collect();
            let variance = population_variance(&relative_energies);
            let energy_j: f64 = reports.iter().map(EnergyReport::total_energy).sum();
            let latency_s = reports.iter().map(EnergyReport::total_latency).fold(0.0, f64::max);

            let mut round_reward = None;
            if let Some(rl) = rl.as_mut() {
                let v = variance.max(f64::MIN_POSITIVE);
                let r = reward(accuracy - global.0, latency_s.max(f64::MIN_POSITIVE), energy_j.max(f64::MIN_POSITIVE), v, &rl.params)?;
                if let Some(p) = rl.pending.as_mut() {
                    p.2 = r;
                }
                rl.agent.end_round(h as u64)?;
                round_reward = Some(r);
            }
            global = (accuracy, loss);
            Ok(RoundMetrics {
                round: h,
                accuracy,
                loss,
                energy_j,
                latency_s,
                variance,
                selected: selected.clone(),
                betas: alloc.betas.clone(),
                relative_energies,
                cumulative_energies: fleet.iter().map(|d| d.cumulative_energy).collect(),
                clients: records,
                reward: round_reward,
            })
        })();
        match step {
            Ok(m) => {
                elapsed += m.latency_s;
                log.push(m);
                if elapsed > cfg.time_limit_s {
                    break;
                }
            }
            Err(e) => {
                abort = Some(format!("round {h}: {e}"));
                break;
            }
        }
    }

    let mut summary = compute_summary(&log, initial, cfg.target_accuracy, cfg.time_limit_s);
    summary.policy = cfg.policy.id().to_string();
    summary.seed = cfg.seed;
    summary.imitation_agreement = pretrain.as_ref().map(|p| p.agreement);
    Ok(RunOutcome { config, summary, log, devices: fleet, env, pretrain, abort })
}
