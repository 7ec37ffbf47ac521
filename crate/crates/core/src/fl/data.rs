use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dims: usize,
    pub classes: usize,
}

impl ClientDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dims: usize, classes: usize) -> Result<Self> {
        if dims == 0 || classes == 0 {
            return Err(Error::ShapeMismatch("dims and classes must be >= 1".into()));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::ShapeMismatch(format!(
                "{} features for {} rows of {dims} dims",
                features.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l >= classes) {
            return Err(Error::ShapeMismatch(format!("label {l} outside {classes} classes")));
        }
        Ok(Self { features, labels, dims, classes })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dims);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Self { features, labels, dims: self.dims, classes: self.classes }
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn rows_by_label(&self) -> Vec<Vec<usize>> {
        let mut by_label = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_label[l].push(i);
        }
        by_label
    }
}

/// Gaussian mixture with one isotropic component per class. Class `j` is
/// centred at `±separation · e_(j mod dims)` (sign flips every `dims` classes,
/// scale grows every `2·dims`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dims: usize,
    pub classes: usize,
    pub samples: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { dims: 2, classes: 2, samples: 10_000, separation: 4.0, noise: 1.0 }
    }
}

impl SyntheticSpec {
    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let axis = class % self.dims;
        let block = class / self.dims;
        let sign = if block % 2 == 0 { 1.0 } else { -1.0 };
        let scale = (1 + block / 2) as f64;
        let mut mean = vec![0.0; self.dims];
        mean[axis] = sign * scale * self.separation;
        mean
    }

    /// Balanced labels (`i mod classes`), shuffled.
    pub fn generate(&self, seed: u64, stream_index: u64) -> Result<ClientDataset> {
        if self.dims == 0 || self.classes < 2 || !(self.noise >= 0.0) {
            return Err(Error::Config("data: dims >= 1, classes >= 2, noise >= 0".into()));
        }
        let mut rng = stream_rng(seed, Stream::Data, stream_index);
        let mut labels: Vec<usize> = (0..self.samples).map(|i| i % self.classes).collect();
        labels.shuffle(&mut rng);
        let means: Vec<Vec<f64>> = (0..self.classes).map(|c| self.class_mean(c)).collect();
        let normal = Normal::new(0.0, self.noise.max(0.0)).expect("noise >= 0");
        let mut features = Vec::with_capacity(self.samples * self.dims);
        for &l in &labels {
            for m in &means[l] {
                features.push(m + normal.sample(&mut rng));
            }
        }
        ClientDataset::new(features, labels, self.dims, self.classes)
    }
}

/// Label-stratified round-robin split. Rows of each label are shuffled and
/// dealt in turn, continuing the dealer position across labels, so per-client
/// label counts and sizes differ by at most one.
pub fn partition_iid(data: &ClientDataset, n: usize, seed: u64) -> Result<Vec<ClientDataset>> {
    if n == 0 || n > data.size() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} samples across {n} clients",
            data.size()
        )));
    }
    let mut rng = stream_rng(seed, Stream::Partition, 0);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dealer = 0;
    for mut rows in data.rows_by_label() {
        rows.shuffle(&mut rng);
        for r in rows {
            parts[dealer % n].push(r);
            dealer += 1;
        }
    }
    Ok(parts.iter().map(|rows| data.subset(rows)).collect())
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration > 0");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Per-label client proportions drawn from `Dirichlet(concentration · 1_n)`;
/// each label's shuffled rows are cut at the cumulative proportions. The
/// whole draw is repeated until every client holds at least one row.
pub fn partition_dirichlet(
    data: &ClientDataset,
    n: usize,
    concentration: f64,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    if !(concentration > 0.0) {
        return Err(Error::InvalidArgument("concentration must be positive".into()));
    }
    if n == 0 || n > data.size() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} samples across {n} clients",
            data.size()
        )));
    }
    let mut rng = stream_rng(seed, Stream::Partition, 1);
    let by_label = data.rows_by_label();
    for _ in 0..10_000 {
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n];
        for rows in &by_label {
            let mut rows = rows.clone();
            rows.shuffle(&mut rng);
            let props = dirichlet(&mut rng, concentration, n);
            let m = rows.len();
            let mut start = 0;
            let mut acc = 0.0;
            for (client, p) in props.iter().enumerate() {
                acc += p;
                let end = if client + 1 == n { m } else { ((acc * m as f64).round() as usize).min(m) };
                let end = end.max(start);
                parts[client].extend_from_slice(&rows[start..end]);
                start = end;
            }
        }
        if parts.iter().all(|p| !p.is_empty()) {
            for p in parts.iter_mut() {
                p.sort_unstable();
            }
            return Ok(parts.iter().map(|rows| data.subset(rows)).collect());
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not draw a Dirichlet({concentration}) split with no empty client"
    )))
}

/// Parses the columnar text format: comma-separated rows `x_0,...,x_{d-1},label`
/// with an optional header line (detected by a non-numeric first field).
/// Lines starting with `#` and blank lines are skipped. `classes` is
/// `max(label) + 1`.
pub fn parse_csv_dataset(text: &str) -> Result<ClientDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dims = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if labels.is_empty() && record[0].parse::<f64>().is_err() {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse(format!("line {line}: need at least one feature and a label")));
        }
        let d = record.len() - 1;
        if *dims.get_or_insert(d) != d {
            return Err(Error::Parse(format!("line {line}: expected {} features", dims.unwrap())));
        }
        for f in record.iter().take(d) {
            features.push(f.parse::<f64>().map_err(|e| Error::Parse(format!("line {line}: {e}")))?);
        }
        labels.push(record[d].parse::<usize>().map_err(|e| Error::Parse(format!("line {line}: label: {e}")))?);
    }
    let dims = dims.ok_or(Error::EmptyDataset)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    ClientDataset::new(features, labels, dims, classes)
}

pub fn load_csv_dataset(path: &Path) -> Result<ClientDataset> {
    parse_csv_dataset(&std::fs::read_to_string(path)?)
}
