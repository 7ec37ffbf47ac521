use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use edgesel::harness::{compare_runs, run_experiment, write_outputs, RunConfig, RunOutcome};
use edgesel::{Error, Result};

/// Energy-aware client selection for federated learning on edge fleets.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one configuration over a seed range, in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `a..b` (exclusive) or `a..=b` (inclusive).
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Tabulate summaries of finished runs as CSV.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("seed range {s:?}; expected a..b or a..=b"));
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else {
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        (a, b, false)
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn report(out: &RunOutcome) {
    let s = &out.summary;
    eprintln!(
        "{} seed {}: {} rounds, accuracy {:.4}, energy {:.4e} J, variance {:.4e}, latency {:.1} s{}",
        s.policy,
        s.seed,
        s.rounds_run,
        s.final_accuracy,
        s.total_energy_j,
        s.energy_variance,
        s.cumulative_latency_s,
        if s.feasible { "" } else { " (time limit exceeded)" },
    );
    if let Some(msg) = &out.abort {
        eprintln!("aborted: {msg}");
    }
}

fn status(outs: &[RunOutcome]) -> ExitCode {
    if outs.iter().any(|o| o.abort.is_some()) {
        ExitCode::from(1)
    } else if outs.iter().any(|o| !o.summary.feasible) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = run_experiment(&cfg)?;
            write_outputs(&outcome, &out)?;
            report(&outcome);
            Ok(status(&[outcome]))
        }
        Command::Sweep { config, seeds, out } => {
            let base = RunConfig::load(&config)?;
            let seeds = parse_seeds(&seeds)?;
            let outs = seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = RunConfig { seed, ..base.clone() };
                    let outcome = run_experiment(&cfg)?;
                    write_outputs(&outcome, &out.join(format!("seed_{seed}")))?;
                    Ok(outcome)
                })
                .collect::<Result<Vec<_>>>()?;
            outs.iter().for_each(report);
            Ok(status(&outs))
        }
        Command::Compare { runs } => {
            print!("{}", compare_runs(&runs)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=3").unwrap(), vec![2, 3]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
