//! Factored trainer: one inverse soft-Q learner for π on the intent-informed
//! MDP over `u = (s, x)`, one for ζ on the intent-transition MDP over
//! `v = (s, x⁻)` whose actions are intents.
//!
//! Augmented state ids: `u = s * |X| + x` and `v = s * (|X| + 1) + slot(x⁻)`,
//! so the learners' softmax tables are exactly the AMM's π and ζ tables.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::mdp::{validate_amm, AmmModel, DemoSet, FiniteMdp, MdpBuilder, Table, Trajectory};
use crate::soft_q::{SoftQLearner, Transition};
use crate::training::{check_demos, run_em, AccuracyProbe, Backend, IdilConfig, TrainingLog};

fn check_table(model: &AmmModel, mdp: &FiniteMdp, table: Table) -> Result<()> {
    let report = validate_amm(model, mdp)?;
    match report.violations.iter().find(|v| v.table == table) {
        None => Ok(()),
        Some(v) => Err(Error::Invalid(format!("{v}"))),
    }
}

/// MDP over `u = (s, x)` with `T̃((s', x') | (s, x), a) = T(s' | s, a) ζ(x' | s', x)`
/// and `μ̃₀(s, x) = μ₀(s) ζ(x | s, #)`. Only `model`'s ζ is used; rewards are 0.
pub fn build_intent_informed_mdp(mdp: &FiniteMdp, model: &AmmModel) -> Result<FiniteMdp> {
    check_table(model, mdp, Table::Zeta)?;
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), model.n_intents());
    let mut b = MdpBuilder::new(ns * nx, na, mdp.gamma(), mdp.horizon());
    for s in 0..ns {
        for x in 0..nx {
            let u = s * nx + x;
            for a in 0..na {
                let mut row = Vec::new();
                for &(next, p) in mdp.successors(s, a) {
                    for (xn, &z) in model.zeta_slot_row(next, x).iter().enumerate() {
                        if z > 0.0 {
                            row.push((next * nx + xn, p * z));
                        }
                    }
                }
                b.transition(u, a, row);
            }
            if mdp.is_terminal(s) {
                b.mark_terminal(u);
            }
        }
    }
    let mut mu0 = vec![0.0; ns * nx];
    for (s, &m) in mdp.mu0().iter().enumerate() {
        for (x, &z) in model.zeta_row(s, None).iter().enumerate() {
            mu0[s * nx + x] = m * z;
        }
    }
    b.initial(mu0);
    b.build()
}

/// MDP over `v = (s, x⁻)` with intents as actions:
/// `T̄((s', x) | (s, x⁻), x) = Σₐ π(a | s, x) T(s' | s, a)` and `μ̄₀(s, #) = μ₀(s)`.
/// Only `model`'s π is used; rewards are 0.
pub fn build_intent_transition_mdp(mdp: &FiniteMdp, model: &AmmModel) -> Result<FiniteMdp> {
    check_table(model, mdp, Table::Pi)?;
    let (ns, nx) = (mdp.n_states(), model.n_intents());
    let np = nx + 1;
    let mut b = MdpBuilder::new(ns * np, nx, mdp.gamma(), mdp.horizon());
    for s in 0..ns {
        for slot in 0..np {
            let v = s * np + slot;
            for x in 0..nx {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (a, &pa) in model.pi_row(s, x).iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for &(next, pt) in mdp.successors(s, a) {
                        let target = next * np + x;
                        match row.iter_mut().find(|(t, _)| *t == target) {
                            Some(e) => e.1 += pa * pt,
                            None => row.push((target, pa * pt)),
                        }
                    }
                }
                b.transition(v, x, row);
            }
            if mdp.is_terminal(s) {
                b.mark_terminal(v);
            }
        }
    }
    let mut mu0 = vec![0.0; ns * np];
    for (s, &m) in mdp.mu0().iter().enumerate() {
        mu0[s * np + nx] = m;
    }
    b.initial(mu0);
    b.build()
}

/// Pushes one transition per step. The last step of a truncated episode has
/// no recorded successor and is skipped; the last step of a terminated
/// episode is kept with `done` set.
pub(crate) fn push_steps(
    len: usize,
    done: bool,
    mut state: impl FnMut(usize) -> usize,
    mut action: impl FnMut(usize) -> usize,
    out: &mut Vec<Transition>,
) {
    for t in 0..len {
        let s = state(t);
        let (next, is_done) = if t + 1 < len {
            (state(t + 1), false)
        } else if done {
            (s, true)
        } else {
            continue;
        };
        out.push(Transition {
            s,
            a: action(t),
            next,
            initial: t == 0,
            done: is_done,
        });
    }
}

fn intents_of(t: &Trajectory) -> Result<&[usize]> {
    t.intents
        .as_deref()
        .ok_or_else(|| Error::Invalid("trajectory is missing intents".into()))
}

/// `((sᵗ, xᵗ), aᵗ, (sᵗ⁺¹, xᵗ⁺¹))` transitions of the intent-informed MDP.
pub fn pi_transitions(trajectories: &[Trajectory], n_intents: usize) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for t in trajectories {
        let x = intents_of(t)?;
        push_steps(
            t.len(),
            t.done,
            |i| t.states[i] * n_intents + x[i],
            |i| t.actions[i],
            &mut out,
        );
    }
    Ok(out)
}

/// `((sᵗ, xᵗ⁻¹), xᵗ, (sᵗ⁺¹, xᵗ))` transitions of the intent-transition MDP.
pub fn zeta_transitions(trajectories: &[Trajectory], n_intents: usize) -> Result<Vec<Transition>> {
    let np = n_intents + 1;
    let mut out = Vec::new();
    for t in trajectories {
        let x = intents_of(t)?;
        let slot = |i: usize| if i == 0 { n_intents } else { x[i - 1] };
        push_steps(
            t.len(),
            t.done,
            |i| t.states[i] * np + slot(i),
            |i| x[i],
            &mut out,
        );
    }
    Ok(out)
}

pub(crate) struct FactoredBackend {
    n_states: usize,
    n_actions: usize,
    n_intents: usize,
    pi: SoftQLearner,
    zeta: SoftQLearner,
}

impl FactoredBackend {
    pub(crate) fn new(mdp: &FiniteMdp, config: &IdilConfig) -> Result<Self> {
        let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), config.n_intents);
        let mut zeta = SoftQLearner::new(
            ns * (nx + 1),
            nx,
            mdp.gamma(),
            config.zeta.clone(),
            derive_seed(config.seed, 5),
        )?;
        let bonus = config.zeta_stay_bias * config.zeta.temperature;
        if bonus != 0.0 {
            zeta.shift_q(|v, x| if v % (nx + 1) == x { bonus } else { 0.0 });
        }
        Ok(FactoredBackend {
            n_states: ns,
            n_actions: na,
            n_intents: nx,
            pi: SoftQLearner::new(
                ns * nx,
                na,
                mdp.gamma(),
                config.pi.clone(),
                derive_seed(config.seed, 4),
            )?,
            zeta,
        })
    }
}

impl Backend for FactoredBackend {
    fn model(&self) -> Result<AmmModel> {
        AmmModel::from_tables(
            self.n_states,
            self.n_actions,
            self.n_intents,
            self.zeta.extract_policy()?,
            self.pi.extract_policy()?,
        )
    }

    fn set_expert(&mut self, augmented: &DemoSet) -> Result<()> {
        let pi = pi_transitions(&augmented.trajectories, self.n_intents)?;
        let zeta = zeta_transitions(&augmented.trajectories, self.n_intents)?;
        if pi.is_empty() || zeta.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        self.pi.set_expert(&pi)?;
        self.zeta.set_expert(&zeta)
    }

    fn add_policy(&mut self, rollouts: &[Trajectory]) -> Result<()> {
        self.pi
            .add_policy(&pi_transitions(rollouts, self.n_intents)?)?;
        self.zeta
            .add_policy(&zeta_transitions(rollouts, self.n_intents)?)
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        Ok((self.pi.update(rng)?, self.zeta.update(rng)?))
    }
}

/// Learns `(ζ, π)` from demonstrations; the first `demos.n_labeled`
/// trajectories keep their intents, the rest are decoded every iteration.
pub fn train_idil(
    mdp: &FiniteMdp,
    demos: &DemoSet,
    config: &IdilConfig,
) -> Result<(AmmModel, TrainingLog)> {
    train_idil_probed(mdp, demos, config, None)
}

/// [`train_idil`] that also scores intent accuracy on `probe` at each evaluation.
pub fn train_idil_probed(
    mdp: &FiniteMdp,
    demos: &DemoSet,
    config: &IdilConfig,
    probe: Option<&AccuracyProbe>,
) -> Result<(AmmModel, TrainingLog)> {
    config.validate()?;
    check_demos(mdp, demos, config.n_intents)?;
    let mut backend = FactoredBackend::new(mdp, config)?;
    run_em(mdp, demos, config, &mut backend, probe)
}
