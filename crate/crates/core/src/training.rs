//! The EM outer loop shared by every inverse soft-Q trainer.
//!
//! Each iteration decodes intents for the unlabeled demonstrations, rebuilds
//! the expert buffers from the augmented set, appends fresh on-policy
//! rollouts to the policy buffers, and runs `updates_per_estep` learner
//! updates. Evaluation happens whenever the exploration-step counter passes
//! the next multiple of `eval_every` (and once before training).

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::inference::augment_demos_with;
use crate::mdp::{rollout_with, AmmModel, DemoSet, FiniteMdp, Trajectory};
use crate::metrics::{episodic_reward, intent_accuracy, Alignment, TrainedModel};
use crate::occupancy::{
    empirical_occupancy, exact_occupancy, f_divergence, DivergenceKind, DEFAULT_TOL,
};
use crate::soft_q::SoftQConfig;

/// Which evaluated model a trainer returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Highest evaluated mean reward; earliest wins ties.
    Best,
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdilConfig {
    pub n_intents: usize,
    pub pi: SoftQConfig,
    pub zeta: SoftQConfig,
    /// Initial ζ-learner Q bonus, in units of its temperature, for keeping
    /// the previous intent; biases the first decodes toward sticky paths.
    pub zeta_stay_bias: f64,
    /// Until this many exploration steps, the expert buffers hold only the
    /// labeled demonstrations and no decoding happens. Ignored without labels.
    pub warmup_explore_steps: u64,
    pub updates_per_estep: usize,
    pub rollouts_per_estep: usize,
    pub max_explore_steps: u64,
    /// The plateau test is not applied before this many exploration steps.
    pub min_explore_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Stop once the best reward has not improved by more than
    /// `plateau_tol · |best|` for this many evaluations; 0 disables the test.
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub selection: Selection,
    /// Log the empirical joint divergence at each evaluation (one exact
    /// occupancy solve per evaluation).
    pub track_divergence: bool,
    pub divergence_kind: DivergenceKind,
    pub seed: u64,
}

impl Default for IdilConfig {
    fn default() -> Self {
        IdilConfig {
            n_intents: 1,
            pi: SoftQConfig::default(),
            zeta: SoftQConfig::default(),
            zeta_stay_bias: 4.0,
            warmup_explore_steps: 20_000,
            updates_per_estep: 200,
            rollouts_per_estep: 16,
            max_explore_steps: 300_000,
            min_explore_steps: 0,
            eval_every: 5_000,
            eval_episodes: 8,
            plateau_window: 10,
            plateau_tol: 0.01,
            selection: Selection::Best,
            track_divergence: false,
            divergence_kind: DivergenceKind::TotalVariation,
            seed: 0,
        }
    }
}

impl IdilConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_intents == 0 {
            return Err(Error::Invalid("n_intents must be ≥ 1".into()));
        }
        self.pi.validate()?;
        self.zeta.validate()?;
        if self.updates_per_estep == 0 {
            return Err(Error::Invalid("updates_per_estep must be ≥ 1".into()));
        }
        if self.rollouts_per_estep == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Invalid(
                "rollouts_per_estep, eval_every and eval_episodes must be positive".into(),
            ));
        }
        if !self.zeta_stay_bias.is_finite() {
            return Err(Error::Invalid("zeta_stay_bias must be finite".into()));
        }
        if !(self.plateau_tol >= 0.0) {
            return Err(Error::Invalid("plateau_tol must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Held-out labeled data scored at every evaluation.
#[derive(Clone, Debug)]
pub struct AccuracyProbe {
    pub demos: DemoSet,
    pub truth: GroundTruth,
    pub alignment: Alignment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub explore_steps: u64,
    pub updates: u64,
    pub mean_reward: f64,
    pub reward_std: f64,
    /// Mean π-learner loss over the last iteration (NaN before training).
    pub pi_loss: f64,
    /// Mean ζ-learner loss over the last iteration (NaN when absent).
    pub zeta_loss: f64,
    pub joint_divergence: Option<f64>,
    pub intent_accuracy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepCap,
    Plateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EvalRecord>,
    /// Index into `records` of the returned model.
    pub selected: usize,
    pub stop_reason: StopReason,
}

impl TrainingLog {
    pub fn selected_record(&self) -> &EvalRecord {
        &self.records[self.selected]
    }

    pub fn best_reward(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.mean_reward)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with a header row; floats use fixed 6-digit precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "iteration,explore_steps,updates,mean_reward,reward_std,pi_loss,zeta_loss,joint_divergence,intent_accuracy"
        )?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.iteration,
                r.explore_steps,
                r.updates,
                r.mean_reward,
                r.reward_std,
                r.pi_loss,
                r.zeta_loss,
                opt(r.joint_divergence),
                opt(r.intent_accuracy)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The part of a trainer that differs between algorithms.
pub(crate) trait Backend {
    /// The current factored model (used for decoding and evaluation).
    fn model(&self) -> Result<AmmModel>;
    fn set_expert(&mut self, augmented: &DemoSet) -> Result<()>;
    fn add_policy(&mut self, rollouts: &[Trajectory]) -> Result<()>;
    /// One update of every learner; returns `(π loss, ζ loss)`.
    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<(f64, f64)>;

    /// On-policy rollouts, one per seed.
    fn rollouts(&self, mdp: &FiniteMdp, seeds: &[u64], exec: Execution) -> Result<Vec<Trajectory>> {
        let model = self.model()?;
        Ok(exec.map_slice(seeds, |&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rollout_with(mdp, &model, &mut rng)
        }))
    }
}

/// `D_f(ρ_N ‖ ρ̂_E)` where `ρ̂_E` is the discount-weighted measure of demos
/// carrying intents. TV is the default kind because the empirical measure
/// has zeros wherever the model does not, which makes χ² and KL infinite.
pub fn empirical_joint_divergence(
    model: &AmmModel,
    augmented: &DemoSet,
    mdp: &FiniteMdp,
    tol: f64,
    kind: DivergenceKind,
) -> Result<f64> {
    let exact = exact_occupancy(mdp, model, tol)?;
    let empirical = empirical_occupancy(
        augmented,
        mdp.n_states(),
        mdp.n_actions(),
        model.n_intents(),
        mdp.gamma(),
    )?;
    f_divergence(&exact.normalized(), &empirical.rho, kind)
}

pub(crate) fn check_demos(mdp: &FiniteMdp, demos: &DemoSet, n_intents: usize) -> Result<()> {
    if demos.is_empty() {
        return Err(Error::Invalid("no demonstrations".into()));
    }
    demos.validate(mdp, n_intents)
}

/// Model snapshot with its mean and std reward, divergence and accuracy.
type Evaluation = (AmmModel, f64, f64, Option<f64>, Option<f64>);

fn evaluate<B: Backend>(
    mdp: &FiniteMdp,
    backend: &B,
    demos: &DemoSet,
    config: &IdilConfig,
    probe: Option<&AccuracyProbe>,
    eval_index: usize,
    exec: Execution,
) -> Result<Evaluation> {
    let model = backend.model()?;
    let seed = derive_seed(derive_seed(config.seed, 2), eval_index as u64);
    let (mean, std) = episodic_reward(mdp, &model, config.eval_episodes, seed, exec)?;
    let divergence = if config.track_divergence {
        let augmented = augment_demos_with(demos, &model, exec)?;
        Some(empirical_joint_divergence(
            &model,
            &augmented,
            mdp,
            DEFAULT_TOL,
            config.divergence_kind,
        )?)
    } else {
        None
    };
    let accuracy = match probe {
        Some(p) => Some(intent_accuracy(
            &TrainedModel::Intent(model.clone()),
            &p.demos,
            &p.truth,
            p.alignment,
            exec,
        )?),
        None => None,
    };
    Ok((model, mean, std, divergence, accuracy))
}

pub(crate) fn run_em<B: Backend>(
    mdp: &FiniteMdp,
    demos: &DemoSet,
    config: &IdilConfig,
    backend: &mut B,
    probe: Option<&AccuracyProbe>,
) -> Result<(AmmModel, TrainingLog)> {
    let exec = Execution::default();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3));
    let rollout_base = derive_seed(config.seed, 1);
    let mut rollout_counter = 0u64;
    let mut explore_steps = 0u64;
    let mut updates = 0u64;
    let mut records = Vec::new();
    let mut models = Vec::new();
    let mut next_eval = 0u64;
    let mut best = f64::NEG_INFINITY;
    let mut plateau_best = f64::NEG_INFINITY;
    let mut since_improvement = 0usize;
    let mut losses = (f64::NAN, f64::NAN);
    let mut iteration = 0usize;
    let mut stop_reason = StopReason::StepCap;
    let mut selected = 0usize;
    let warmup = if demos.n_labeled > 0 {
        config.warmup_explore_steps
    } else {
        0
    };
    let labeled = DemoSet::new(
        demos.trajectories[..demos.n_labeled].to_vec(),
        demos.n_labeled,
    )?;

    loop {
        let at_cap = explore_steps >= config.max_explore_steps;
        if explore_steps >= next_eval || at_cap {
            let (model, mean, std, divergence, accuracy) =
                evaluate(mdp, backend, demos, config, probe, records.len(), exec)?;
            records.push(EvalRecord {
                iteration,
                explore_steps,
                updates,
                mean_reward: mean,
                reward_std: std,
                pi_loss: losses.0,
                zeta_loss: losses.1,
                joint_divergence: divergence,
                intent_accuracy: accuracy,
            });
            match config.selection {
                Selection::Best if mean > best => {
                    best = mean;
                    selected = records.len() - 1;
                    models.clear();
                    models.push(model);
                }
                Selection::Best => {}
                Selection::Last => {
                    selected = records.len() - 1;
                    models.clear();
                    models.push(model);
                }
            }
            if mean > plateau_best + config.plateau_tol * plateau_best.abs() {
                plateau_best = mean;
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
            while next_eval <= explore_steps {
                next_eval += config.eval_every;
            }
            if config.plateau_window > 0
                && since_improvement >= config.plateau_window
                && explore_steps >= config.min_explore_steps
                && explore_steps >= warmup
            {
                stop_reason = StopReason::Plateau;
                break;
            }
        }
        if at_cap {
            break;
        }

        if explore_steps < warmup {
            backend.set_expert(&labeled)?;
        } else {
            let current = backend.model()?;
            backend.set_expert(&augment_demos_with(demos, &current, exec)?)?;
        }
        let seeds: Vec<u64> = (0..config.rollouts_per_estep)
            .map(|i| derive_seed(rollout_base, rollout_counter + i as u64))
            .collect();
        rollout_counter += config.rollouts_per_estep as u64;
        let rollouts = backend.rollouts(mdp, &seeds, exec)?;
        explore_steps += rollouts.iter().map(|t| t.len() as u64).sum::<u64>();
        backend.add_policy(&rollouts)?;
        let (mut pi_sum, mut zeta_sum) = (0.0, 0.0);
        for _ in 0..config.updates_per_estep {
            let (lp, lz) = backend.update(&mut rng)?;
            pi_sum += lp;
            zeta_sum += lz;
        }
        updates += config.updates_per_estep as u64;
        let n = config.updates_per_estep as f64;
        losses = (pi_sum / n, zeta_sum / n);
        iteration += 1;
    }

    let log = TrainingLog {
        records,
        selected,
        stop_reason,
    };
    let model = models
        .pop()
        .ok_or_else(|| Error::Numeric("no evaluated model".into()))?;
    Ok((model, log))
}
