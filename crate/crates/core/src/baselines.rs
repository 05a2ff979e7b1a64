//! Intent-unaware baselines: tabular behaviour cloning and inverse soft-Q on
//! the raw MDP.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::factored::push_steps;
use crate::mdp::{AmmModel, DemoSet, FiniteMdp, StationaryPolicy, Trajectory};
use crate::soft_q::{SoftQLearner, Transition};
use crate::training::{check_demos, run_em, Backend, IdilConfig, TrainingLog};

/// Add-one smoothed maximum likelihood: `π(a | s) ∝ count(s, a) + 1`.
pub fn train_bc(demos: &DemoSet, n_states: usize, n_actions: usize) -> Result<StationaryPolicy> {
    if demos.is_empty() {
        return Err(Error::Invalid("no demonstrations".into()));
    }
    let mut counts = vec![1.0; n_states * n_actions];
    for t in &demos.trajectories {
        for (&s, &a) in t.states.iter().zip(&t.actions) {
            if s >= n_states || a >= n_actions {
                return Err(Error::dim("demo id", n_states.max(n_actions), s.max(a)));
            }
            counts[s * n_actions + a] += 1.0;
        }
    }
    for row in counts.chunks_mut(n_actions) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|c| *c /= total);
    }
    StationaryPolicy::from_table(n_states, n_actions, counts)
}

pub fn state_transitions(trajectories: &[Trajectory]) -> Vec<Transition> {
    let mut out = Vec::new();
    for t in trajectories {
        push_steps(t.len(), t.done, |i| t.states[i], |i| t.actions[i], &mut out);
    }
    out
}

struct PlainBackend {
    learner: SoftQLearner,
}

impl PlainBackend {
    fn policy(&self) -> Result<StationaryPolicy> {
        StationaryPolicy::from_table(
            self.learner.n_states(),
            self.learner.n_actions(),
            self.learner.extract_policy()?,
        )
    }
}

impl Backend for PlainBackend {
    fn model(&self) -> Result<AmmModel> {
        Ok(self.policy()?.to_amm())
    }

    fn set_expert(&mut self, augmented: &DemoSet) -> Result<()> {
        let transitions = state_transitions(&augmented.trajectories);
        if transitions.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        self.learner.set_expert(&transitions)
    }

    fn add_policy(&mut self, rollouts: &[Trajectory]) -> Result<()> {
        self.learner.add_policy(&state_transitions(rollouts))
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        Ok((self.learner.update(rng)?, f64::NAN))
    }
}

/// Inverse soft-Q on the raw MDP, ignoring intents; trained by the same loop
/// as the intent-aware learners with a single intent (`config.pi` is used).
pub fn train_iq_baseline(
    mdp: &FiniteMdp,
    demos: &DemoSet,
    config: &IdilConfig,
) -> Result<(StationaryPolicy, TrainingLog)> {
    let config = IdilConfig {
        n_intents: 1,
        ..config.clone()
    };
    config.validate()?;
    let stripped = demos.with_labels(0)?;
    check_demos(mdp, &stripped, 1)?;
    let mut backend = PlainBackend {
        learner: SoftQLearner::new(
            mdp.n_states(),
            mdp.n_actions(),
            mdp.gamma(),
            config.pi.clone(),
            derive_seed(config.seed, 4),
        )?,
    };
    let (model, log) = run_em(mdp, &stripped, &config, &mut backend, None)?;
    let policy =
        StationaryPolicy::from_table(mdp.n_states(), mdp.n_actions(), model.pi().to_vec())?;
    Ok((policy, log))
}
