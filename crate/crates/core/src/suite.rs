//! Experiment plumbing: resolved run configs, the single-run pipeline shared
//! with the command line, and the suite cross-product with its summary.
//!
//! Every config document carries `schema_version`; nothing is read from the
//! process environment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{train_bc, train_iq_baseline};
use crate::dataset::GroundTruth;
use crate::envs::{generate_split, EnvSpec, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::factored::train_idil;
use crate::math::mean_std;
use crate::mdp::DemoSet;
use crate::metrics::{episodic_reward, intent_accuracy, Alignment, TrainedModel};
use crate::oiql::train_oiql;
use crate::training::{IdilConfig, TrainingLog};

pub const SCHEMA_VERSION: u32 = 1;

fn check_schema(version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Idil,
    Oiql,
    Bc,
    Iq,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Idil => "idil",
            Algo::Oiql => "oiql",
            Algo::Bc => "bc",
            Algo::Iq => "iq",
        }
    }

    pub fn infers_intents(self) -> bool {
        matches!(self, Algo::Idil | Algo::Oiql)
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idil" => Ok(Algo::Idil),
            "oiql" => Ok(Algo::Oiql),
            "bc" => Ok(Algo::Bc),
            "iq" => Ok(Algo::Iq),
            other => Err(Error::Invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// A standalone training-config document: the trainer settings plus a
/// schema version, every field optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingDocument {
    pub schema_version: u32,
    #[serde(flatten)]
    pub training: IdilConfig,
}

impl TrainingDocument {
    pub fn parse(text: &str) -> Result<IdilConfig> {
        let doc: TrainingDocument = serde_json::from_str(text)?;
        check_schema(doc.schema_version)?;
        doc.training.validate()?;
        Ok(doc.training)
    }
}

/// Everything needed to reproduce one run, with every default spelled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub env: EnvSpec,
    pub algo: Algo,
    pub label_fraction: f64,
    pub seed: u64,
    /// Demonstrations generated in total; the first half trains.
    pub n_demos: usize,
    pub epsilon: f64,
    pub demo_seed: u64,
    pub eval_seed: u64,
    /// `n_intents` and `seed` are overwritten from the env and run seed.
    pub training: IdilConfig,
}

impl RunConfig {
    pub fn resolve(
        env: EnvSpec,
        algo: Algo,
        label_fraction: f64,
        seed: u64,
        base: &SuiteDefaults,
    ) -> Self {
        let training = IdilConfig {
            n_intents: env.n_intents(),
            seed,
            ..base.training.clone()
        };
        RunConfig {
            schema_version: SCHEMA_VERSION,
            env,
            algo,
            label_fraction,
            seed,
            n_demos: base.n_demos,
            epsilon: base.epsilon,
            demo_seed: derive_seed(seed, 100),
            eval_seed: derive_seed(seed, 101),
            training,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    pub label_fraction: f64,
    /// Fresh evaluation of the returned model.
    pub mean_reward: f64,
    pub reward_std: f64,
    /// Reward of the selected record of the training curve, if any.
    pub curve_reward: Option<f64>,
    pub intent_accuracy: Option<f64>,
    pub alignment: Option<Alignment>,
    pub explore_steps: Option<u64>,
}

/// Outcome of one run; `log` is absent for behaviour cloning.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: TrainedModel,
    pub log: Option<TrainingLog>,
    pub metrics: FinalMetrics,
}

/// Identity for semi-supervised runs, best permutation otherwise.
pub fn default_alignment(label_fraction: f64) -> Alignment {
    if label_fraction > 0.0 {
        Alignment::Identity
    } else {
        Alignment::BestPermutation
    }
}

pub fn train_algo(
    algo: Algo,
    env: &EnvSpec,
    train: &DemoSet,
    config: &IdilConfig,
) -> Result<(TrainedModel, Option<TrainingLog>)> {
    let mdp = env.build()?;
    Ok(match algo {
        Algo::Idil => {
            let (m, log) = train_idil(&mdp, train, config)?;
            (TrainedModel::Intent(m), Some(log))
        }
        Algo::Oiql => {
            let (m, log) = train_oiql(&mdp, train, config)?;
            (TrainedModel::Intent(m), Some(log))
        }
        Algo::Iq => {
            let (p, log) = train_iq_baseline(&mdp, train, config)?;
            (TrainedModel::Stationary(p), Some(log))
        }
        Algo::Bc => (
            TrainedModel::Stationary(train_bc(train, mdp.n_states(), mdp.n_actions())?),
            None,
        ),
    })
}

/// What [`score`] needs beyond the model itself.
#[derive(Clone, Copy, Debug)]
pub struct Scoring<'a> {
    pub algo: Algo,
    pub env: &'a EnvSpec,
    pub label_fraction: f64,
    pub seed: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Unlabeled test demonstrations and their ground truth.
    pub test: Option<(&'a DemoSet, &'a GroundTruth)>,
}

/// Fresh reward evaluation, plus intent accuracy on the test set for
/// intent-aware algorithms.
pub fn score(
    scoring: &Scoring,
    model: &TrainedModel,
    log: Option<&TrainingLog>,
) -> Result<FinalMetrics> {
    let mdp = scoring.env.build()?;
    let exec = Execution::default();
    let (mean, std) = episodic_reward(
        &mdp,
        &model.as_amm(),
        scoring.eval_episodes,
        scoring.eval_seed,
        exec,
    )?;
    let (accuracy, alignment) = match scoring.test {
        Some((demos, truth)) if scoring.algo.infers_intents() && !truth.entries.is_empty() => {
            let alignment = default_alignment(scoring.label_fraction);
            (
                Some(intent_accuracy(model, demos, truth, alignment, exec)?),
                Some(alignment),
            )
        }
        _ => (None, None),
    };
    Ok(FinalMetrics {
        algo: scoring.algo,
        env: scoring.env.name(),
        seed: scoring.seed,
        label_fraction: scoring.label_fraction,
        mean_reward: mean,
        reward_std: std,
        curve_reward: log.map(|l| l.selected_record().mean_reward),
        intent_accuracy: accuracy,
        alignment,
        explore_steps: log.map(|l| l.records.last().map_or(0, |r| r.explore_steps)),
    })
}

/// Generates demonstrations, trains, and scores.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome> {
    check_schema(config.schema_version)?;
    let mdp = config.env.build()?;
    let expert = config.env.expert(config.epsilon)?;
    let split = generate_split(
        &mdp,
        &expert,
        config.n_demos,
        config.label_fraction,
        config.demo_seed,
    )?;
    let (model, log) = train_algo(config.algo, &config.env, &split.train, &config.training)?;
    let scoring = Scoring {
        algo: config.algo,
        env: &config.env,
        label_fraction: config.label_fraction,
        seed: config.seed,
        eval_episodes: config.training.eval_episodes,
        eval_seed: config.eval_seed,
        test: Some((&split.test, &split.test_truth)),
    };
    let metrics = score(&scoring, &model, log.as_ref())?;
    Ok(RunOutcome {
        model,
        log,
        metrics,
    })
}

/// Writes `config.json`, `model.json`, `final_metrics.json` and, when a
/// training curve exists, `log.csv`.
pub fn write_run(dir: &Path, config: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    fs::write(
        dir.join("model.json"),
        serde_json::to_string(&outcome.model)?,
    )?;
    fs::write(
        dir.join("final_metrics.json"),
        serde_json::to_string_pretty(&outcome.metrics)?,
    )?;
    if let Some(log) = &outcome.log {
        log.write_csv(&dir.join("log.csv"))?;
    }
    Ok(())
}

/// Settings shared by every cell of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteDefaults {
    pub n_demos: usize,
    pub epsilon: f64,
    pub training: IdilConfig,
}

impl Default for SuiteDefaults {
    fn default() -> Self {
        SuiteDefaults {
            n_demos: 100,
            epsilon: DEFAULT_EPSILON,
            training: IdilConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    /// Parsed with the same names as the command line (`multigoals-2`, ...).
    pub env: String,
    pub algo: Algo,
    #[serde(default)]
    pub label_fraction: f64,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub schema_version: u32,
    pub cells: Vec<SuiteCell>,
    #[serde(default)]
    pub defaults: SuiteDefaults,
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: SuiteConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.cells.is_empty() {
            return Err(Error::Invalid("suite has no cells".into()));
        }
        for c in &self.cells {
            c.env.parse::<EnvSpec>()?;
            if c.seeds.is_empty() {
                return Err(Error::Invalid(format!(
                    "cell {}/{} lists no seeds",
                    c.env,
                    c.algo.name()
                )));
            }
            if !(0.0..=1.0).contains(&c.label_fraction) {
                return Err(Error::Invalid(format!(
                    "label fraction {} outside [0, 1]",
                    c.label_fraction
                )));
            }
        }
        self.defaults.training.validate()
    }
}

/// Per-cell aggregate over the seeds that finished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub env: String,
    pub algo: Algo,
    pub label_fraction: f64,
    pub completed: usize,
    pub failed: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub runs: Vec<FinalMetrics>,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub cells: Vec<CellSummary>,
    /// `(run directory, error message)` for every failed run.
    pub failures: Vec<(PathBuf, String)>,
}

pub fn cell_dir_name(env: &str, algo: Algo, label_fraction: f64) -> String {
    format!("{env}_{}_labels{:.2}", algo.name(), label_fraction)
}

/// Runs the cross-product sequentially; a failing run is recorded in its
/// directory as `error.txt` and the suite moves on.
pub fn run_suite(config: &SuiteConfig, out: &Path) -> Result<SuiteReport> {
    config.validate()?;
    fs::create_dir_all(out)?;
    fs::write(
        out.join("suite.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for cell in &config.cells {
        let env: EnvSpec = cell.env.parse()?;
        let cell_dir = out.join(cell_dir_name(&env.name(), cell.algo, cell.label_fraction));
        let mut runs = Vec::new();
        for &seed in &cell.seeds {
            let dir = cell_dir.join(format!("seed_{seed}"));
            let run = RunConfig::resolve(
                env.clone(),
                cell.algo,
                cell.label_fraction,
                seed,
                &config.defaults,
            );
            let result = run_experiment(&run).and_then(|o| write_run(&dir, &run, &o).map(|_| o));
            match result {
                Ok(o) => runs.push(o.metrics),
                Err(e) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&run)?)?;
                    fs::write(dir.join("error.txt"), e.to_string())?;
                    failures.push((dir, e.to_string()));
                }
            }
        }
        cells.push(summarize(&env.name(), cell, runs));
    }
    fs::write(out.join("summary.csv"), summary_csv(&cells))?;
    Ok(SuiteReport { cells, failures })
}

fn summarize(env: &str, cell: &SuiteCell, runs: Vec<FinalMetrics>) -> CellSummary {
    let rewards: Vec<f64> = runs.iter().map(|m| m.mean_reward).collect();
    let accuracies: Vec<f64> = runs.iter().filter_map(|m| m.intent_accuracy).collect();
    let (reward_mean, reward_std) = mean_std(&rewards);
    let acc = (!accuracies.is_empty()).then(|| mean_std(&accuracies));
    CellSummary {
        env: env.to_string(),
        algo: cell.algo,
        label_fraction: cell.label_fraction,
        completed: runs.len(),
        failed: cell.seeds.len() - runs.len(),
        reward_mean,
        reward_std,
        accuracy_mean: acc.map(|a| a.0),
        accuracy_std: acc.map(|a| a.1),
        runs,
    }
}

/// One row per cell; population std over seeds; fixed 6-digit floats.
pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from("env,algo,label_fraction,completed,failed,reward_mean,reward_std,accuracy_mean,accuracy_std\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{:.2},{},{},{:.6},{:.6},{},{}",
            c.env,
            c.algo.name(),
            c.label_fraction,
            c.completed,
            c.failed,
            c.reward_mean,
            c.reward_std,
            opt(c.accuracy_mean),
            opt(c.accuracy_std)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_document_defaults_materialize() {
        let cfg =
            TrainingDocument::parse(r#"{"schema_version": 1, "updates_per_estep": 7}"#).unwrap();
        assert_eq!(cfg.updates_per_estep, 7);
        assert_eq!(cfg.eval_episodes, IdilConfig::default().eval_episodes);
        assert!(TrainingDocument::parse(r#"{"schema_version": 2}"#).is_err());
        assert!(TrainingDocument::parse(r#"{"updates_per_estep": 7}"#).is_err());
    }

    #[test]
    fn summary_mean_is_arithmetic() {
        let cell = SuiteCell {
            env: "toy".into(),
            algo: Algo::Bc,
            label_fraction: 0.0,
            seeds: vec![0, 1, 2],
        };
        let runs: Vec<FinalMetrics> = [1.0, 2.0, 6.0]
            .iter()
            .enumerate()
            .map(|(i, &r)| FinalMetrics {
                algo: Algo::Bc,
                env: "toy".into(),
                seed: i as u64,
                label_fraction: 0.0,
                mean_reward: r,
                reward_std: 0.0,
                curve_reward: None,
                intent_accuracy: None,
                alignment: None,
                explore_steps: None,
            })
            .collect();
        let s = summarize("toy", &cell, runs);
        assert_eq!(s.reward_mean, 3.0);
        assert_eq!(s.failed, 0);
        assert!(summary_csv(&[s]).contains("toy,bc,0.00,3,0,3.000000,"));
    }
}
