//! JSONL persistence for demonstrations and intent sidecars.
//!
//! A demo file starts with a header line
//! `{"n_labeled": <int>, "env": "<name>", "seed": <int>}` followed by one
//! trajectory object per line with fields `states`, `actions`, `intents`
//! (array or `null`), `reward` and `done`.
//!
//! The ground-truth sidecar holds one `{"index": i, "intents": [...]}` object
//! per stripped trajectory.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{DemoSet, Trajectory};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub n_labeled: usize,
    pub env: String,
    pub seed: u64,
}

/// Intent labels removed from a demo set, keyed by trajectory index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entries: Vec<TruthEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub index: usize,
    pub intents: Vec<usize>,
}

impl GroundTruth {
    pub fn get(&self, index: usize) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.index == index)
            .map(|e| e.intents.as_slice())
    }

    /// Writes the stripped labels back into `demos`.
    pub fn restore(&self, demos: &mut DemoSet) -> Result<()> {
        for e in &self.entries {
            let t = demos
                .trajectories
                .get_mut(e.index)
                .ok_or_else(|| Error::Invalid(format!("sidecar index {} out of range", e.index)))?;
            if t.len() != e.intents.len() {
                return Err(Error::dim("sidecar intents", t.len(), e.intents.len()));
            }
            t.intents = Some(e.intents.clone());
        }
        Ok(())
    }
}

pub fn write_demos(path: &Path, header: &DemoHeader, demos: &DemoSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    write_trajectory_lines(&mut w, &demos.trajectories)?;
    w.flush()?;
    Ok(())
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectory_lines(&mut w, trajectories)?;
    w.flush()?;
    Ok(())
}

fn write_trajectory_lines<W: Write>(w: &mut W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut *w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_demos(path: &Path) -> Result<(DemoHeader, DemoSet)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Invalid(format!("{} is empty", path.display())))??;
    let header: DemoHeader = serde_json::from_str(&header_line)?;
    let mut trajectories = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trajectories.push(serde_json::from_str::<Trajectory>(&line)?);
    }
    let demos = DemoSet::new(trajectories, header.n_labeled)?;
    Ok((header, demos))
}

pub fn write_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in &truth.entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(GroundTruth { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(intents: Option<Vec<usize>>) -> Trajectory {
        Trajectory {
            states: vec![0, 1, 2],
            actions: vec![1, 1, 0],
            intents,
            reward: -0.25,
            done: true,
        }
    }

    #[test]
    fn demo_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let demos = DemoSet::new(vec![traj(Some(vec![0, 0, 1])), traj(None)], 1).unwrap();
        let header = DemoHeader {
            n_labeled: 1,
            env: "toy".into(),
            seed: 5,
        };
        write_demos(&path, &header, &demos).unwrap();
        let (h, d) = read_demos(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(d, demos);
        let text = std::fs::read_to_string(&path).unwrap();
        let line = text.lines().nth(2).unwrap();
        assert!(line.contains("\"intents\":null"));
    }

    #[test]
    fn header_must_match_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(
            &path,
            "{\"n_labeled\":1,\"env\":\"x\",\"seed\":0}\n{\"states\":[0],\"actions\":[0],\"intents\":null,\"reward\":0.0}\n",
        )
        .unwrap();
        assert!(read_demos(&path).is_err());
    }
}
