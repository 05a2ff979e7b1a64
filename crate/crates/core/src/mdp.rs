//! Finite MDPs, Agent Markov Models and trajectories.
//!
//! Table layouts (all row-major, flat `Vec<f64>`):
//!
//! * transitions: one sparse row `[(s', p)]` per `(s, a)`, index `s * |A| + a`
//! * reward: `s * |A| + a`
//! * `ζ(x | s, x⁻)`: `(s * (|X| + 1) + slot(x⁻)) * |X| + x`, where the slot of
//!   the pre-episode intent `#` is `|X|`
//! * `π(a | s, x)`: `(s * |X| + x) * |A| + a`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sample_categorical, sample_sparse, softmax_into};

/// Tolerance for row-stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    mu0: Vec<f64>,
    gamma: f64,
    horizon: usize,
    terminal: Vec<bool>,
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Episode cap used by rollouts.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.successors(s, a)
            .iter()
            .filter(|(n, _)| *n == next)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )))
    }
}

/// Incremental constructor for [`FiniteMdp`].
#[derive(Clone, Debug)]
pub struct MdpBuilder {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    mu0: Vec<f64>,
    gamma: f64,
    horizon: usize,
    terminal: Vec<bool>,
}

impl MdpBuilder {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, horizon: usize) -> Self {
        MdpBuilder {
            n_states,
            n_actions,
            transitions: vec![Vec::new(); n_states * n_actions],
            reward: vec![0.0; n_states * n_actions],
            mu0: vec![0.0; n_states],
            gamma,
            horizon,
            terminal: vec![false; n_states],
        }
    }

    pub fn transition(&mut self, s: usize, a: usize, row: Vec<(usize, f64)>) -> &mut Self {
        self.transitions[s * self.n_actions + a] = row;
        self
    }

    pub fn reward(&mut self, s: usize, a: usize, r: f64) -> &mut Self {
        self.reward[s * self.n_actions + a] = r;
        self
    }

    pub fn initial(&mut self, mu0: Vec<f64>) -> &mut Self {
        self.mu0 = mu0;
        self
    }

    /// Makes `s` absorbing: every action self-loops with zero reward.
    pub fn terminal(&mut self, s: usize) -> &mut Self {
        self.terminal[s] = true;
        for a in 0..self.n_actions {
            self.transitions[s * self.n_actions + a] = vec![(s, 1.0)];
            self.reward[s * self.n_actions + a] = 0.0;
        }
        self
    }

    /// Flags `s` as terminal for rollouts without touching its transitions.
    pub fn mark_terminal(&mut self, s: usize) -> &mut Self {
        self.terminal[s] = true;
        self
    }

    pub fn build(self) -> Result<FiniteMdp> {
        check_gamma(self.gamma)?;
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Invalid(
                "MDP needs at least one state and action".into(),
            ));
        }
        if self.mu0.len() != self.n_states {
            return Err(Error::dim("mu0", self.n_states, self.mu0.len()));
        }
        let mut transitions = self.transitions;
        for (idx, row) in transitions.iter_mut().enumerate() {
            row.retain(|&(_, p)| p != 0.0);
            let mut total = 0.0;
            for &(next, p) in row.iter() {
                if next >= self.n_states {
                    return Err(Error::dim("transition target", self.n_states, next));
                }
                if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&p) {
                    return Err(Error::Invalid(format!(
                        "transition ({}, {}) has probability {p} outside [0, 1]",
                        idx / self.n_actions,
                        idx % self.n_actions
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Invalid(format!(
                    "transition row ({}, {}) sums to {total}",
                    idx / self.n_actions,
                    idx % self.n_actions
                )));
            }
        }
        let mu_total: f64 = self.mu0.iter().sum();
        if (mu_total - 1.0).abs() > STOCHASTIC_TOL || self.mu0.iter().any(|&p| p < 0.0) {
            return Err(Error::Invalid(format!("mu0 sums to {mu_total}")));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numeric("non-finite reward".into()));
        }
        Ok(FiniteMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transitions,
            reward: self.reward,
            mu0: self.mu0,
            gamma: self.gamma,
            horizon: self.horizon,
            terminal: self.terminal,
        })
    }
}

/// Agent Markov Model restricted to intents: `(ζ, π)` over a known intent set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmmModel {
    n_states: usize,
    n_actions: usize,
    n_intents: usize,
    zeta: Vec<f64>,
    pi: Vec<f64>,
}

impl AmmModel {
    /// Wraps raw tables; only shapes are checked here (see [`validate_amm`]).
    pub fn from_tables(
        n_states: usize,
        n_actions: usize,
        n_intents: usize,
        zeta: Vec<f64>,
        pi: Vec<f64>,
    ) -> Result<Self> {
        if n_intents == 0 {
            return Err(Error::Invalid("need at least one intent".into()));
        }
        let zeta_len = n_states * (n_intents + 1) * n_intents;
        if zeta.len() != zeta_len {
            return Err(Error::dim("zeta table", zeta_len, zeta.len()));
        }
        let pi_len = n_states * n_intents * n_actions;
        if pi.len() != pi_len {
            return Err(Error::dim("pi table", pi_len, pi.len()));
        }
        Ok(AmmModel {
            n_states,
            n_actions,
            n_intents,
            zeta,
            pi,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize, n_intents: usize) -> Self {
        AmmModel {
            n_states,
            n_actions,
            n_intents,
            zeta: vec![1.0 / n_intents as f64; n_states * (n_intents + 1) * n_intents],
            pi: vec![1.0 / n_actions as f64; n_states * n_intents * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_intents(&self) -> usize {
        self.n_intents
    }

    /// Number of `x⁻` slots, `|X| + 1`.
    pub fn n_prev(&self) -> usize {
        self.n_intents + 1
    }

    /// Table slot of a previous intent; `None` is the pre-episode `#`.
    pub fn prev_slot(&self, prev: Option<usize>) -> usize {
        prev.unwrap_or(self.n_intents)
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn zeta_row(&self, s: usize, prev: Option<usize>) -> &[f64] {
        self.zeta_slot_row(s, self.prev_slot(prev))
    }

    pub fn zeta_slot_row(&self, s: usize, slot: usize) -> &[f64] {
        let start = (s * self.n_prev() + slot) * self.n_intents;
        &self.zeta[start..start + self.n_intents]
    }

    pub fn zeta_slot_row_mut(&mut self, s: usize, slot: usize) -> &mut [f64] {
        let start = (s * self.n_prev() + slot) * self.n_intents;
        &mut self.zeta[start..start + self.n_intents]
    }

    pub fn pi_row(&self, s: usize, x: usize) -> &[f64] {
        let start = (s * self.n_intents + x) * self.n_actions;
        &self.pi[start..start + self.n_actions]
    }

    pub fn pi_row_mut(&mut self, s: usize, x: usize) -> &mut [f64] {
        let start = (s * self.n_intents + x) * self.n_actions;
        &mut self.pi[start..start + self.n_actions]
    }

    /// Same model with the initial-intent distribution forced to `x` in every state.
    pub fn with_initial_intent(&self, x: usize) -> Self {
        let mut out = self.clone();
        let slot = self.n_intents;
        for s in 0..self.n_states {
            let row = out.zeta_slot_row_mut(s, slot);
            row.fill(0.0);
            row[x] = 1.0;
        }
        out
    }

    /// Checks the model against `mdp`, failing on structural or stochasticity violations.
    pub fn ensure_valid(&self, mdp: &FiniteMdp) -> Result<()> {
        let report = validate_amm(self, mdp)?;
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Invalid(format!(
                "{} violation(s), first: {v}",
                report.violations.len()
            ))),
        }
    }
}

/// A stationary, intent-free policy `π(a | s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn from_table(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::dim(
                "policy table",
                n_states * n_actions,
                probs.len(),
            ));
        }
        Ok(StationaryPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Single-intent AMM with the same action distribution.
    pub fn to_amm(&self) -> AmmModel {
        AmmModel {
            n_states: self.n_states,
            n_actions: self.n_actions,
            n_intents: 1,
            zeta: vec![1.0; self.n_states * 2],
            pi: self.probs.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Table {
    Zeta,
    Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    RowSum,
    NegativeEntry,
    NonFinite,
}

/// One failed invariant. For ζ rows `condition` is the `x⁻` slot
/// (`|X|` for `#`); for π rows it is the intent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub table: Table,
    pub kind: ViolationKind,
    pub state: usize,
    pub condition: usize,
    pub residual: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} row (s={}, {}) {:?} residual {:.3e}",
            self.table, self.state, self.condition, self.kind, self.residual
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_row(table: Table, state: usize, condition: usize, row: &[f64], out: &mut Vec<Violation>) {
    if row.iter().any(|v| !v.is_finite()) {
        out.push(Violation {
            table,
            kind: ViolationKind::NonFinite,
            state,
            condition,
            residual: f64::NAN,
        });
        return;
    }
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        out.push(Violation {
            table,
            kind: ViolationKind::NegativeEntry,
            state,
            condition,
            residual: -min,
        });
    }
    let residual = (row.iter().sum::<f64>() - 1.0).abs();
    if residual > STOCHASTIC_TOL {
        out.push(Violation {
            table,
            kind: ViolationKind::RowSum,
            state,
            condition,
            residual,
        });
    }
}

/// Lists every stochasticity violation of `model`; shape mismatches are errors.
pub fn validate_amm(model: &AmmModel, mdp: &FiniteMdp) -> Result<ValidationReport> {
    if model.n_states != mdp.n_states() {
        return Err(Error::dim("model states", mdp.n_states(), model.n_states));
    }
    if model.n_actions != mdp.n_actions() {
        return Err(Error::dim(
            "model actions",
            mdp.n_actions(),
            model.n_actions,
        ));
    }
    let mut violations = Vec::new();
    for s in 0..model.n_states {
        for slot in 0..model.n_prev() {
            check_row(
                Table::Zeta,
                s,
                slot,
                model.zeta_slot_row(s, slot),
                &mut violations,
            );
        }
        for x in 0..model.n_intents {
            check_row(Table::Pi, s, x, model.pi_row(s, x), &mut violations);
        }
    }
    Ok(ValidationReport { violations })
}

/// Row-wise `softmax(q / temperature)` over a flat `(row, action)` table.
pub fn softmax_policy_from_q(q: &[f64], n_actions: usize, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Invalid(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if n_actions == 0 || !q.len().is_multiple_of(n_actions) {
        return Err(Error::dim("q table columns", n_actions, q.len()));
    }
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite q entry at {i}")));
    }
    let mut out = vec![0.0; q.len()];
    for (row, dst) in q.chunks(n_actions).zip(out.chunks_mut(n_actions)) {
        softmax_into(row, temperature, dst);
    }
    Ok(out)
}

/// A demonstration `(s⁰:ʰ, a⁰:ʰ)`, optionally with intents `x⁰:ʰ`.
///
/// `done` records whether the episode ended by entering an absorbing state
/// (rather than at the horizon); the final successor itself is not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub intents: Option<Vec<usize>>,
    pub reward: f64,
    #[serde(default)]
    pub done: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self, mdp: &FiniteMdp, n_intents: usize) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::Invalid("empty trajectory".into()));
        }
        if self.actions.len() != self.states.len() {
            return Err(Error::dim(
                "trajectory actions",
                self.states.len(),
                self.actions.len(),
            ));
        }
        if let Some(&s) = self.states.iter().find(|&&s| s >= mdp.n_states()) {
            return Err(Error::dim("trajectory state id", mdp.n_states(), s));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= mdp.n_actions()) {
            return Err(Error::dim("trajectory action id", mdp.n_actions(), a));
        }
        if let Some(intents) = &self.intents {
            if intents.len() != self.states.len() {
                return Err(Error::dim(
                    "trajectory intents",
                    self.states.len(),
                    intents.len(),
                ));
            }
            if let Some(&x) = intents.iter().find(|&&x| x >= n_intents) {
                return Err(Error::dim("trajectory intent id", n_intents, x));
            }
        }
        Ok(())
    }
}

/// Demonstrations whose first `n_labeled` entries carry ground-truth intents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub trajectories: Vec<Trajectory>,
    pub n_labeled: usize,
}

impl DemoSet {
    pub fn new(trajectories: Vec<Trajectory>, n_labeled: usize) -> Result<Self> {
        if n_labeled > trajectories.len() {
            return Err(Error::Invalid(format!(
                "n_labeled {n_labeled} exceeds {} trajectories",
                trajectories.len()
            )));
        }
        if let Some(i) = trajectories[..n_labeled]
            .iter()
            .position(|t| t.intents.as_ref().is_none_or(|x| x.is_empty()))
        {
            return Err(Error::Invalid(format!(
                "labeled trajectory {i} has no intents"
            )));
        }
        Ok(DemoSet {
            trajectories,
            n_labeled,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn validate(&self, mdp: &FiniteMdp, n_intents: usize) -> Result<()> {
        self.trajectories
            .iter()
            .try_for_each(|t| t.validate(mdp, n_intents))
    }

    /// Keeps labels only on the first `n_labeled` trajectories.
    pub fn with_labels(&self, n_labeled: usize) -> Result<Self> {
        let mut trajectories = self.trajectories.clone();
        for t in trajectories.iter_mut().skip(n_labeled) {
            t.intents = None;
        }
        DemoSet::new(trajectories, n_labeled)
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

/// Simulates one episode of `model` acting in `mdp`, recording the latent intents.
pub fn rollout(mdp: &FiniteMdp, model: &AmmModel, seed: u64) -> Result<Trajectory> {
    model.ensure_valid(mdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rollout_with(mdp, model, &mut rng))
}

/// [`rollout`] without validation; the caller guarantees `model` fits `mdp`.
pub fn rollout_with<R: rand::Rng + ?Sized>(
    mdp: &FiniteMdp,
    model: &AmmModel,
    rng: &mut R,
) -> Trajectory {
    let horizon = mdp.horizon().max(1);
    let mut states = Vec::with_capacity(horizon.min(1024));
    let mut actions = Vec::with_capacity(horizon.min(1024));
    let mut intents = Vec::with_capacity(horizon.min(1024));
    let mut reward = 0.0;
    let mut done = false;
    let mut s = sample_categorical(mdp.mu0(), rng);
    let mut prev = None;
    for _ in 0..horizon {
        let x = sample_categorical(model.zeta_row(s, prev), rng);
        let a = sample_categorical(model.pi_row(s, x), rng);
        states.push(s);
        actions.push(a);
        intents.push(x);
        reward += mdp.reward(s, a);
        let next = sample_sparse(mdp.successors(s, a), rng);
        if mdp.is_terminal(next) && !mdp.is_terminal(s) {
            done = true;
            break;
        }
        s = next;
        prev = Some(x);
    }
    Trajectory {
        states,
        actions,
        intents: Some(intents),
        reward,
        done,
    }
}
