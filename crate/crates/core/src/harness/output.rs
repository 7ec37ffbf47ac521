use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::sim::{RunOutcome, RunSummary};
use crate::device::ChannelEnv;
use crate::error::{Error, Result};

pub const ROUNDS_HEADER: &str = "round,acc,loss,energy_J,latency_s,variance,selected_ids,betas";
const CLIENTS_HEADER: &str =
    "round,id,beta,cpu_freq_Hz,train_latency_s,trans_latency_s,train_energy_J,trans_energy_J,local_loss";
const DEVICES_HEADER: &str = "id,profile,cores,kappa,cycles_per_sample,local_iterations,dataset_size,tx_power_W,channel_gain,battery_J,sensitivity,selections,energy_J,relative_energy";

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `%.9g`: nine significant digits, fixed notation for exponents in
/// `[-4, 9)`, scientific otherwise, trailing zeros dropped.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs())
    }
}

pub fn round_sig9(x: f64) -> f64 {
    fmt_sig9(x).parse().unwrap_or(x)
}

fn join<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(";")
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

fn summary_json(s: &RunSummary) -> Result<String> {
    let mut v = serde_json::to_value(s)?;
    round_json(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn channel_json(env: &ChannelEnv) -> Result<String> {
    Ok(serde_json::to_string_pretty(env)? + "\n")
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let mut put = |r: &[String]| w.write_record(r).map_err(|e| Error::Parse(e.to_string()));
    put(&header.split(',').map(String::from).collect::<Vec<_>>())?;
    for r in rows {
        put(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rounds.csv`, `clients.csv`, `devices.csv`, `summary.json`,
/// `channel.json` and the resolved `config.toml` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let log = &outcome.log;
    write_csv(
        &dir.join("rounds.csv"),
        ROUNDS_HEADER,
        log.iter().map(|m| {
            vec![
                m.round.to_string(),
                fmt_sig9(m.accuracy),
                fmt_sig9(m.loss),
                fmt_sig9(m.energy_j),
                fmt_sig9(m.latency_s),
                fmt_sig9(m.variance),
                join(&m.selected, |i| i.to_string()),
                join(&m.betas, |b| fmt_sig9(*b)),
            ]
        }),
    )?;
    write_csv(
        &dir.join("clients.csv"),
        CLIENTS_HEADER,
        log.iter().flat_map(|m| {
            m.clients.iter().map(move |c| {
                vec![
                    m.round.to_string(),
                    c.id.to_string(),
                    fmt_sig9(c.beta),
                    fmt_sig9(c.cpu_freq),
                    fmt_sig9(c.train_latency),
                    fmt_sig9(c.trans_latency),
                    fmt_sig9(c.train_energy),
                    fmt_sig9(c.trans_energy),
                    fmt_sig9(c.local_loss),
                ]
            })
        }),
    )?;
    write_csv(
        &dir.join("devices.csv"),
        DEVICES_HEADER,
        outcome.devices.iter().map(|d| {
            vec![
                d.id.to_string(),
                d.profile.name.clone(),
                d.cores.to_string(),
                fmt_sig9(d.kappa),
                fmt_sig9(d.cycles_per_sample),
                d.local_iterations.to_string(),
                d.dataset_size.to_string(),
                fmt_sig9(d.tx_power),
                fmt_sig9(d.channel_gain),
                fmt_sig9(d.battery_capacity),
                fmt_sig9(d.sensitivity),
                d.selection_count.to_string(),
                fmt_sig9(d.cumulative_energy),
                fmt_sig9(d.cumulative_relative_energy()),
            ]
        }),
    )?;
    fs::write(dir.join("summary.json"), summary_json(&outcome.summary)?)?;
    fs::write(dir.join("channel.json"), channel_json(&outcome.env)?)?;
    fs::write(dir.join("config.toml"), outcome.config.to_toml())?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    Ok(serde_json::from_str(&text)?)
}

fn ratio(x: f64, base: Option<f64>) -> String {
    match base {
        Some(b) if b > 0.0 => fmt_sig9(x / b),
        _ => String::new(),
    }
}

/// Side-by-side table of run summaries. Energy and variance are also given
/// relative to the `random` run with the same seed, when one is present.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<String> {
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("no runs to compare".into()));
    }
    let runs: Vec<(String, RunSummary)> = dirs
        .iter()
        .map(|d| Ok((d.display().to_string(), read_summary(d)?)))
        .collect::<Result<_>>()?;
    let baseline: HashMap<u64, &RunSummary> =
        runs.iter().filter(|(_, s)| s.policy == "random").map(|(_, s)| (s.seed, s)).collect();
    let mut out = String::from(
        "run,policy,seed,accuracy,energy_J,energy_vs_random,variance,variance_vs_random,max_relative_energy,latency_s,rounds_to_target,feasible\n",
    );
    for (name, s) in &runs {
        let base = baseline.get(&s.seed);
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{},{},{},{}",
            s.policy,
            s.seed,
            fmt_sig9(s.final_accuracy),
            fmt_sig9(s.total_energy_j),
            ratio(s.total_energy_j, base.map(|b| b.total_energy_j)),
            fmt_sig9(s.energy_variance),
            ratio(s.energy_variance, base.map(|b| b.energy_variance)),
            fmt_sig9(s.max_relative_energy),
            fmt_sig9(s.cumulative_latency_s),
            s.rounds_to_target.map_or(String::new(), |r| r.to_string()),
            s.feasible,
        );
    }
    Ok(out)
}
