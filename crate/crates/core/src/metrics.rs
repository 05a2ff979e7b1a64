//! Evaluation: episodic reward, intent accuracy, and per-intent behaviour dumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::inference::viterbi_decode;
use crate::math::mean_std;
use crate::mdp::{rollout_with, AmmModel, DemoSet, FiniteMdp, StationaryPolicy, Trajectory};

pub const DEFAULT_EVAL_EPISODES: usize = 8;
/// Largest intent count for which every relabeling is tried.
pub const MAX_PERMUTATION_INTENTS: usize = 6;

/// Anything a trainer can return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrainedModel {
    Intent(AmmModel),
    /// Intent-free policy of a baseline.
    Stationary(StationaryPolicy),
}

impl TrainedModel {
    /// Model used for simulation; stationary policies become single-intent AMMs.
    pub fn as_amm(&self) -> AmmModel {
        match self {
            TrainedModel::Intent(m) => m.clone(),
            TrainedModel::Stationary(p) => p.to_amm(),
        }
    }

    pub fn intent_model(&self) -> Result<&AmmModel> {
        match self {
            TrainedModel::Intent(m) => Ok(m),
            TrainedModel::Stationary(_) => Err(Error::Unsupported(
                "intent-free baseline models cannot infer intents".into(),
            )),
        }
    }
}

/// Undiscounted episode return: mean and population std over `n_episodes`
/// rollouts, episode `i` seeded with `derive_seed(seed, i)`.
pub fn episodic_reward(
    mdp: &FiniteMdp,
    model: &AmmModel,
    n_episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::Invalid(
            "need at least one evaluation episode".into(),
        ));
    }
    model.ensure_valid(mdp)?;
    let rewards = exec.map(n_episodes, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        rollout_with(mdp, model, &mut rng).reward
    });
    Ok(mean_std(&rewards))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Identity,
    BestPermutation,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Alignment::Identity),
            "best_permutation" => Ok(Alignment::BestPermutation),
            other => Err(Error::Invalid(format!("unknown alignment {other:?}"))),
        }
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n)
            .rev()
            .find(|&j| current[j] > current[i - 1])
            .unwrap_or(i);
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

/// Per-step agreement after relabeling predictions. `predicted[m]` and
/// `truth[m]` are the intent sequences of trajectory `m`.
pub fn aligned_accuracy(
    predicted: &[Vec<usize>],
    truth: &[Vec<usize>],
    n_intents: usize,
    alignment: Alignment,
) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::dim(
            "decoded trajectories",
            truth.len(),
            predicted.len(),
        ));
    }
    // confusion[p][t]
    let mut confusion = vec![vec![0usize; n_intents]; n_intents];
    let mut total = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::dim("decoded intents", t.len(), p.len()));
        }
        for (&a, &b) in p.iter().zip(t) {
            if a >= n_intents || b >= n_intents {
                return Err(Error::dim("intent id", n_intents, a.max(b)));
            }
            confusion[a][b] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Invalid("no steps to score".into()));
    }
    let hits = match alignment {
        Alignment::Identity => (0..n_intents).map(|x| confusion[x][x]).sum::<usize>(),
        Alignment::BestPermutation => {
            if n_intents > MAX_PERMUTATION_INTENTS {
                return Err(Error::Unsupported(format!(
                    "best-permutation alignment supports at most {MAX_PERMUTATION_INTENTS} intents"
                )));
            }
            permutations(n_intents)
                .iter()
                .map(|perm| (0..n_intents).map(|x| confusion[x][perm[x]]).sum::<usize>())
                .max()
                .unwrap_or(0)
        }
    };
    Ok(hits as f64 / total as f64)
}

/// Decodes every sidecar-listed trajectory of `test` under `model` and scores
/// the result against the ground truth.
pub fn intent_accuracy(
    model: &TrainedModel,
    test: &DemoSet,
    truth: &GroundTruth,
    alignment: Alignment,
    exec: Execution,
) -> Result<f64> {
    let model = model.intent_model()?;
    if truth.entries.is_empty() {
        return Err(Error::Invalid("ground-truth sidecar is empty".into()));
    }
    let decoded = exec.map_slice(&truth.entries, |e| -> Result<Vec<usize>> {
        let t = test
            .trajectories
            .get(e.index)
            .ok_or_else(|| Error::Invalid(format!("sidecar index {} out of range", e.index)))?;
        Ok(viterbi_decode(t, model)?.intents)
    });
    let predicted = decoded.into_iter().collect::<Result<Vec<_>>>()?;
    let truth: Vec<Vec<usize>> = truth.entries.iter().map(|e| e.intents.clone()).collect();
    aligned_accuracy(&predicted, &truth, model.n_intents(), alignment)
}

/// Rollouts grouped by a forced initial intent: group `x` holds
/// `n_per_intent` episodes whose first intent is `x`.
pub fn behavior_dump(
    mdp: &FiniteMdp,
    model: &AmmModel,
    n_per_intent: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<Trajectory>>> {
    model.ensure_valid(mdp)?;
    let nx = model.n_intents();
    Ok((0..nx)
        .map(|x| {
            let forced = model.with_initial_intent(x);
            exec.map(n_per_intent, |i| {
                let stream = (x * n_per_intent + i) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
                rollout_with(mdp, &forced, &mut rng)
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_complete() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn accuracy_alignment() {
        let truth = vec![vec![0, 0, 1, 1]];
        let swapped = vec![vec![1, 1, 0, 0]];
        assert_eq!(
            aligned_accuracy(&truth, &truth, 2, Alignment::Identity).unwrap(),
            1.0
        );
        assert_eq!(
            aligned_accuracy(&swapped, &truth, 2, Alignment::Identity).unwrap(),
            0.0
        );
        assert_eq!(
            aligned_accuracy(&swapped, &truth, 2, Alignment::BestPermutation).unwrap(),
            1.0
        );
    }

    #[test]
    fn baseline_rejects_intent_queries() {
        let p = StationaryPolicy::from_table(1, 1, vec![1.0]).unwrap();
        let m = TrainedModel::Stationary(p);
        let demos = DemoSet::new(vec![], 0).unwrap();
        let r = intent_accuracy(
            &m,
            &demos,
            &GroundTruth::default(),
            Alignment::Identity,
            Execution::Sequential,
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
