//! Benchmark environments, their hand-crafted experts, and demo synthesis.

pub mod multigoals;
pub mod onemover;
pub mod toy;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{GroundTruth, TruthEntry};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::mdp::{rollout, AmmModel, DemoSet, FiniteMdp, Trajectory};

pub use multigoals::MultiGoalsSpec;
pub use onemover::{OneMoverCodec, OneMoverSpec};
pub use toy::ToySpec;

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Serializable description of an environment instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    MultiGoals(MultiGoalsSpec),
    OneMover(OneMoverSpec),
    Toy(ToySpec),
}

impl EnvSpec {
    /// Short name: `multigoals-<n>`, `onemover` or `toy`.
    pub fn name(&self) -> String {
        match self {
            EnvSpec::MultiGoals(s) => format!("multigoals-{}", s.n_landmarks()),
            EnvSpec::OneMover(_) => "onemover".into(),
            EnvSpec::Toy(_) => "toy".into(),
        }
    }

    pub fn n_intents(&self) -> usize {
        match self {
            EnvSpec::MultiGoals(s) => s.n_landmarks(),
            EnvSpec::OneMover(s) => s.n_intents(),
            EnvSpec::Toy(_) => ToySpec::N_INTENTS,
        }
    }

    pub fn build(&self) -> Result<FiniteMdp> {
        match self {
            EnvSpec::MultiGoals(s) => s.build(),
            EnvSpec::OneMover(s) => OneMoverCodec::new(s)?.build(),
            EnvSpec::Toy(s) => s.build(),
        }
    }

    /// Ground-truth expert; `epsilon` is ignored by the toy ring, whose
    /// noise is part of its spec.
    pub fn expert(&self, epsilon: f64) -> Result<AmmModel> {
        match self {
            EnvSpec::MultiGoals(s) => s.expert(epsilon),
            EnvSpec::OneMover(s) => OneMoverCodec::new(s)?.expert(epsilon),
            EnvSpec::Toy(s) => s.expert(),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        if let Some(n) = lower
            .strip_prefix("multigoals-")
            .or_else(|| lower.strip_prefix("mg-"))
        {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Invalid(format!("bad landmark count in {name:?}")))?;
            return Ok(EnvSpec::MultiGoals(MultiGoalsSpec::new(n)?));
        }
        match lower.as_str() {
            "onemover" => Ok(EnvSpec::OneMover(OneMoverSpec::default())),
            "toy" => Ok(EnvSpec::Toy(ToySpec::default())),
            _ => Err(Error::Invalid(format!("unknown environment {name:?}"))),
        }
    }
}

/// `⌈fraction · count⌉`, robust to the rounding of `fraction · count`.
pub fn labeled_count(count: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Invalid(format!(
            "label fraction {fraction} outside [0, 1]"
        )));
    }
    let raw = fraction * count as f64;
    let n = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    Ok((n as usize).min(count))
}

/// Removes intents from all but the first `n_labeled` trajectories and
/// returns them as a sidecar.
pub fn strip_labels(
    mut trajectories: Vec<Trajectory>,
    n_labeled: usize,
) -> Result<(DemoSet, GroundTruth)> {
    let mut truth = GroundTruth::default();
    for (index, t) in trajectories.iter_mut().enumerate().skip(n_labeled) {
        if let Some(intents) = t.intents.take() {
            truth.entries.push(TruthEntry { index, intents });
        }
    }
    Ok((DemoSet::new(trajectories, n_labeled)?, truth))
}

/// Rolls out `count` expert episodes (trajectory `i` uses seed
/// `derive_seed(seed, i)`) and keeps labels on the first
/// `⌈label_fraction · count⌉`.
pub fn generate_demos(
    mdp: &FiniteMdp,
    expert: &AmmModel,
    count: usize,
    label_fraction: f64,
    seed: u64,
) -> Result<(DemoSet, GroundTruth)> {
    let n_labeled = labeled_count(count, label_fraction)?;
    let trajectories = expert_rollouts(mdp, expert, count, seed, Execution::default())?;
    strip_labels(trajectories, n_labeled)
}

pub fn expert_rollouts(
    mdp: &FiniteMdp,
    expert: &AmmModel,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Trajectory>> {
    expert.ensure_valid(mdp)?;
    exec.map(count, |i| rollout(mdp, expert, derive_seed(seed, i as u64)))
        .into_iter()
        .collect()
}

/// Train/test halves of one demonstration batch.
#[derive(Clone, Debug)]
pub struct DemoSplit {
    pub train: DemoSet,
    pub train_truth: GroundTruth,
    pub test: DemoSet,
    pub test_truth: GroundTruth,
}

/// Generates `count` episodes; the first half forms the training set (with
/// `label_fraction` of it labeled) and the rest an unlabeled test set.
pub fn generate_split(
    mdp: &FiniteMdp,
    expert: &AmmModel,
    count: usize,
    label_fraction: f64,
    seed: u64,
) -> Result<DemoSplit> {
    if count < 2 {
        return Err(Error::Invalid(
            "a split needs at least two demonstrations".into(),
        ));
    }
    let mut all = expert_rollouts(mdp, expert, count, seed, Execution::default())?;
    let test = all.split_off(count / 2);
    let n_labeled = labeled_count(all.len(), label_fraction)?;
    let (train, train_truth) = strip_labels(all, n_labeled)?;
    let (test, test_truth) = strip_labels(test, 0)?;
    Ok(DemoSplit {
        train,
        train_truth,
        test,
        test_truth,
    })
}
