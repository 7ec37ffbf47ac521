//! File formats.
//!
//! Trajectory files are JSON Lines, one decision per line:
//! `{"states": [[f64; 7], ...], "action": {"bits": [0|1, ...], "k": usize}}`.
//!
//! Checkpoints are plain text: a header line `qnetwork layers=7,32,32,1`
//! followed by one parameter per line in the network's flat layout.

use std::io::{BufRead, Write};
use std::path::Path;

use super::imitation::Trajectory;
use super::qnet::QNetwork;
use crate::error::{Error, Result};

pub fn write_trajectories<W: Write>(mut w: W, set: &[Trajectory]) -> Result<()> {
    for t in set {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)?;
        t.action.validate()?;
        out.push(t);
    }
    Ok(out)
}

pub fn save_trajectories(path: &Path, set: &[Trajectory]) -> Result<()> {
    write_trajectories(std::io::BufWriter::new(std::fs::File::create(path)?), set)
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    read_trajectories(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn checkpoint_to_string(net: &QNetwork) -> String {
    let shape: Vec<String> = net.layers().iter().map(|l| l.to_string()).collect();
    let mut s = format!("qnetwork layers={}\n", shape.join(","));
    for p in net.params() {
        s.push_str(&format!("{p:?}\n"));
    }
    s
}

pub fn checkpoint_from_str(text: &str) -> Result<QNetwork> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty checkpoint".into()))?;
    let shape = header
        .strip_prefix("qnetwork layers=")
        .ok_or_else(|| Error::Parse(format!("bad checkpoint header {header:?}")))?;
    let layers = shape
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let params = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    QNetwork::from_params(&layers, params)
}

pub fn save_checkpoint(path: &Path, net: &QNetwork) -> Result<()> {
    Ok(std::fs::write(path, checkpoint_to_string(net))?)
}

pub fn load_checkpoint(path: &Path) -> Result<QNetwork> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ActionVector;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let net = QNetwork::new(&[7, 5, 1], &mut rng).unwrap();
        let text = checkpoint_to_string(&net);
        assert!(text.starts_with("qnetwork layers=7,5,1\n"));
        assert_eq!(checkpoint_from_str(&text).unwrap(), net);
        assert!(checkpoint_from_str("qnetwork layers=7,5,1\n1.0\n").is_err());
        assert!(checkpoint_from_str("model 7,5,1\n").is_err());
    }

    #[test]
    fn trajectories_round_trip() {
        let set = vec![Trajectory {
            states: vec![vec![0.1; 7], vec![-0.3; 7]],
            action: ActionVector::from_selected(2, &[1]).unwrap(),
        }];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &set).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 1);
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), set);
        let bad = br#"{"states":[[0.0]],"action":{"bits":[1],"k":2}}"#;
        assert!(read_trajectories(&bad[..]).is_err());
    }
}
