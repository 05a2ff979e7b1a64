//! `idil` command line. Exit status: 0 on success, 1 on invalid input,
//! 2 on numeric failure (including a failed oracle check).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use idil::dataset::{
    read_demos, read_truth, write_demos, write_trajectories, write_truth, DemoHeader, GroundTruth,
    TruthEntry,
};
use idil::envs::{generate_split, labeled_count, EnvSpec, DEFAULT_EPSILON};
use idil::exec::derive_seed;
use idil::inference::augment_demos;
use idil::metrics::{
    behavior_dump, episodic_reward, intent_accuracy, Alignment, TrainedModel, DEFAULT_EVAL_EPISODES,
};
use idil::occupancy::DEFAULT_TOL;
use idil::oracle::{oracle_report, random_battery, BatteryReport, OracleReport};
use idil::suite::{
    run_suite, score, train_algo, Algo, Scoring, SuiteConfig, TrainingDocument, SCHEMA_VERSION,
};
use idil::{DemoSet, Error, Execution, IdilConfig, Result};

#[derive(Parser)]
#[command(
    name = "idil",
    version,
    about = "Intent-driven imitation learning on finite MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the environment's expert and write train/test demo files.
    GenerateDemos {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Fraction of the training half that keeps its intent labels.
        #[arg(long, default_value_t = 0.0)]
        labels: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// File-name prefix; defaults to the environment name.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a demo file.
    Train {
        #[arg(long, value_parser = parse_algo)]
        algo: Algo,
        #[arg(long)]
        env: String,
        #[arg(long)]
        demos: PathBuf,
        /// Fraction of trajectories whose labels are used; defaults to every
        /// labeled trajectory in the file.
        #[arg(long)]
        labels: Option<f64>,
        /// Training config JSON (`schema_version` plus any trainer fields).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Unlabeled test demos and their sidecar, for intent accuracy.
        #[arg(long, requires = "test_truth")]
        test: Option<PathBuf>,
        #[arg(long, requires = "test")]
        test_truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode every trajectory under a trained model; writes one
    /// `{"index", "intents"}` line per trajectory (given labels are kept).
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model and dump per-intent rollouts.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        env: String,
        /// Algorithm name written to the metrics row.
        #[arg(long, default_value = "unknown")]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        #[arg(long, requires = "truth")]
        test: Option<PathBuf>,
        #[arg(long, requires = "test")]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "identity", value_parser = parse_alignment)]
        alignment: Alignment,
        #[arg(long, default_value_t = 10)]
        dump_per_intent: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the occupancy identities for an expert or a trained model.
    OracleCheck {
        #[arg(long)]
        env: String,
        /// Trained model to check instead of the environment's expert.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Random (MDP, AMM) instances checked alongside the target model.
        #[arg(long, default_value_t = 200)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (env, algo, labels, seed) cell of a suite config.
    RunSuite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_algo(s: &str) -> std::result::Result<Algo, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_alignment(s: &str) -> std::result::Result<Alignment, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Resolved settings of a `train` invocation, written next to its outputs.
#[derive(Serialize)]
struct TrainRecord<'a> {
    schema_version: u32,
    algo: Algo,
    env: &'a EnvSpec,
    demos: &'a Path,
    n_labeled: usize,
    label_fraction: f64,
    seed: u64,
    eval_seed: u64,
    training: &'a IdilConfig,
}

#[derive(Serialize)]
struct OracleCheckReport {
    env: String,
    target: OracleReport,
    battery: Option<BatteryReport>,
    passed: bool,
}

fn read_model(path: &Path) -> Result<TrainedModel> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn check_env(header: &DemoHeader, env: &EnvSpec) -> Result<()> {
    if header.env != env.name() {
        return Err(Error::Invalid(format!(
            "demos were generated for {} but --env is {}",
            header.env,
            env.name()
        )));
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenerateDemos {
            env,
            count,
            labels,
            epsilon,
            seed,
            name,
            out,
        } => {
            let env: EnvSpec = env.parse()?;
            let mdp = env.build()?;
            let split = generate_split(&mdp, &env.expert(epsilon)?, count, labels, seed)?;
            let name = name.unwrap_or_else(|| env.name());
            fs::create_dir_all(&out)?;
            let header = |d: &DemoSet| DemoHeader {
                n_labeled: d.n_labeled,
                env: env.name(),
                seed,
            };
            write_demos(
                &out.join(format!("{name}.train.jsonl")),
                &header(&split.train),
                &split.train,
            )?;
            write_demos(
                &out.join(format!("{name}.test.jsonl")),
                &header(&split.test),
                &split.test,
            )?;
            write_truth(
                &out.join(format!("{name}.intents.jsonl")),
                &split.test_truth,
            )?;
            write_truth(
                &out.join(format!("{name}.train.intents.jsonl")),
                &split.train_truth,
            )?;
            write_json(&out.join(format!("{name}.env.json")), &env)?;
            println!(
                "wrote {} train ({} labeled) and {} test trajectories to {}",
                split.train.len(),
                split.train.n_labeled,
                split.test.len(),
                out.display()
            );
        }
        Command::Train {
            algo,
            env,
            demos,
            labels,
            config,
            seed,
            test,
            test_truth,
            out,
        } => {
            let env: EnvSpec = env.parse()?;
            let (header, demo_set) = read_demos(&demos)?;
            check_env(&header, &env)?;
            let n_labeled = match labels {
                Some(f) => labeled_count(demo_set.len(), f)?,
                None => demo_set.n_labeled,
            };
            if n_labeled > demo_set.n_labeled {
                return Err(Error::Invalid(format!(
                    "--labels asks for {n_labeled} labeled trajectories but the file has {}",
                    demo_set.n_labeled
                )));
            }
            let demo_set = demo_set.with_labels(n_labeled)?;
            let label_fraction = labels.unwrap_or(n_labeled as f64 / demo_set.len().max(1) as f64);
            let base = match &config {
                Some(p) => TrainingDocument::parse(&fs::read_to_string(p)?)?,
                None => IdilConfig::default(),
            };
            let training = IdilConfig {
                n_intents: env.n_intents(),
                seed,
                ..base
            };
            let test_data = match (&test, &test_truth) {
                (Some(t), Some(tt)) => Some((read_demos(t)?.1, read_truth(tt)?)),
                _ => None,
            };
            let (model, log) = train_algo(algo, &env, &demo_set, &training)?;
            let eval_seed = derive_seed(seed, 101);
            let scoring = Scoring {
                algo,
                env: &env,
                label_fraction,
                seed,
                eval_episodes: training.eval_episodes,
                eval_seed,
                test: test_data.as_ref().map(|(d, t)| (d, t)),
            };
            let metrics = score(&scoring, &model, log.as_ref())?;
            fs::create_dir_all(&out)?;
            write_json(
                &out.join("config.json"),
                &TrainRecord {
                    schema_version: SCHEMA_VERSION,
                    algo,
                    env: &env,
                    demos: &demos,
                    n_labeled,
                    label_fraction,
                    seed,
                    eval_seed,
                    training: &training,
                },
            )?;
            fs::write(out.join("model.json"), serde_json::to_string(&model)?)?;
            if let Some(log) = &log {
                log.write_csv(&out.join("log.csv"))?;
            }
            write_json(&out.join("final_metrics.json"), &metrics)?;
            println!(
                "mean reward {:.3} ± {:.3}",
                metrics.mean_reward, metrics.reward_std
            );
        }
        Command::Decode { model, demos, out } => {
            let model = read_model(&model)?;
            let (_, demo_set) = read_demos(&demos)?;
            let augmented = augment_demos(&demo_set, model.intent_model()?)?;
            let entries = augmented
                .trajectories
                .iter()
                .enumerate()
                .map(|(index, t)| TruthEntry {
                    index,
                    intents: t.intents.clone().unwrap_or_default(),
                })
                .collect();
            write_truth(&out, &GroundTruth { entries })?;
        }
        Command::Evaluate {
            model,
            env,
            algo,
            seed,
            episodes,
            test,
            truth,
            alignment,
            dump_per_intent,
            out,
        } => {
            let env: EnvSpec = env.parse()?;
            let mdp = env.build()?;
            let model = read_model(&model)?;
            let amm = model.as_amm();
            let exec = Execution::default();
            let (mean, std) = episodic_reward(&mdp, &amm, episodes, derive_seed(seed, 101), exec)?;
            let accuracy = match (&test, &truth, &model) {
                (Some(t), Some(tt), TrainedModel::Intent(_)) => {
                    let (_, demos) = read_demos(t)?;
                    let truth: GroundTruth = read_truth(tt)?;
                    Some(intent_accuracy(&model, &demos, &truth, alignment, exec)?)
                }
                _ => None,
            };
            fs::create_dir_all(&out)?;
            let accuracy_field = accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            let alignment_field = if accuracy.is_some() {
                serde_json::to_value(alignment)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string()
            } else {
                String::new()
            };
            fs::write(
                out.join("metrics.csv"),
                format!(
                    "algo,env,seed,mean_reward,reward_std,intent_accuracy,alignment\n{algo},{},{seed},{mean:.6},{std:.6},{accuracy_field},{alignment_field}\n",
                    env.name()
                ),
            )?;
            for (x, group) in
                behavior_dump(&mdp, &amm, dump_per_intent, derive_seed(seed, 102), exec)?
                    .iter()
                    .enumerate()
            {
                write_trajectories(&out.join(format!("behavior_intent_{x}.jsonl")), group)?;
            }
            println!("mean reward {mean:.3} ± {std:.3}");
        }
        Command::OracleCheck {
            env,
            model,
            epsilon,
            tol,
            random,
            seed,
            out,
        } => {
            let env: EnvSpec = env.parse()?;
            let mdp = env.build()?;
            let amm = match &model {
                Some(p) => read_model(p)?.as_amm(),
                None => env.expert(epsilon)?,
            };
            let target = oracle_report(&mdp, &amm, tol)?;
            let battery = if random > 0 {
                Some(random_battery(random, seed, tol)?)
            } else {
                None
            };
            let passed = target.passed && battery.as_ref().is_none_or(|b| b.passed);
            let text = serde_json::to_string_pretty(&OracleCheckReport {
                env: env.name(),
                target,
                battery,
                passed,
            })?;
            match &out {
                Some(p) => fs::write(p, &text)?,
                None => println!("{text}"),
            }
            if !passed {
                return Err(Error::Numeric("occupancy identities failed".into()));
            }
        }
        Command::RunSuite { config, out } => {
            let suite = SuiteConfig::parse(&fs::read_to_string(&config)?)?;
            let report = run_suite(&suite, &out)?;
            for (dir, msg) in &report.failures {
                eprintln!("run failed in {}: {msg}", dir.display());
            }
            println!(
                "{} cells, {} failed runs; summary at {}",
                report.cells.len(),
                report.failures.len(),
                out.join("summary.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
