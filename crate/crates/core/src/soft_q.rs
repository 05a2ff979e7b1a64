//! Tabular inverse soft-Q imitation.
//!
//! The learner owns a Q table over the working MDP and minimises
//!
//! ```text
//! L(Q) = −E_E[φ(r)] + anchor,        r(s, a, s') = Q(s, a) − γ (1 − done) V(s')
//! ```
//!
//! with `V(s) = α log Σₐ exp(Q(s, a) / α)`. For χ², `φ(r) = r − r² / (4c)`;
//! with `regularize_all` the quadratic part is instead averaged over expert
//! *and* policy samples, as in the online form of the method. For total
//! variation `φ(r) = clip(r, −c, c)`. The anchor is either
//! `(1 − γ) E_{s₀}[V(s₀)]` over expert initial states (`v0`) or
//! `E_{E∪P}[V(s) − γ (1 − done) V(s')]` (`value`).
//!
//! Gradients are exact: `∂V(s)/∂Q(s, a) = softmax(Q(s, ·) / α)[a]`. Parameters
//! are updated with Adam.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::softmax_into;
use crate::mdp::softmax_policy_from_q;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Chi2,
    TotalVariation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondTerm {
    V0,
    Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftQConfig {
    pub temperature: f64,
    pub lr: f64,
    pub divergence: Divergence,
    pub second_term: SecondTerm,
    pub regularizer_scale: f64,
    /// Apply the χ² penalty to policy samples as well as expert samples.
    pub regularize_all: bool,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Initial Q entries are uniform in `±init_scale · temperature`; 0 gives Q ≡ 0.
    pub init_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for SoftQConfig {
    fn default() -> Self {
        SoftQConfig {
            temperature: 0.01,
            lr: 3e-4,
            divergence: Divergence::Chi2,
            second_term: SecondTerm::Value,
            regularizer_scale: 0.5,
            regularize_all: true,
            batch_size: 256,
            buffer_capacity: 50_000,
            init_scale: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl SoftQConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("temperature", self.temperature),
            ("regularizer_scale", self.regularizer_scale),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("lr must be ≥ 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Invalid(
                "batch size and buffer capacity must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Invalid("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Invalid("init_scale must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// One observed step of the working MDP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub next: usize,
    /// `s` is the first state of its episode.
    pub initial: bool,
    /// `next` is absorbing, so no value is bootstrapped from it.
    pub done: bool,
}

/// FIFO transition buffer.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn get(&self, i: usize) -> Transition {
        self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        (0..n)
            .map(|_| self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// Stable soft value `α log Σ exp(q / α)`.
pub fn soft_value(q_row: &[f64], temperature: f64) -> f64 {
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = q_row.iter().map(|q| ((q - max) / temperature).exp()).sum();
    max + temperature * sum.ln()
}

/// Serializable Q table, row-major `s * |A| + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QSnapshot {
    pub n_states: usize,
    pub n_actions: usize,
    pub temperature: f64,
    pub divergence: Divergence,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SoftQLearner {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    config: SoftQConfig,
    q: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    pub expert_buffer: ReplayBuffer,
    pub policy_buffer: ReplayBuffer,
    initial_states: Vec<usize>,
    step_count: u64,
}

impl SoftQLearner {
    /// `init_seed` drives only the initial Q noise (unused when `init_scale` is 0).
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        config: SoftQConfig,
        init_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Invalid(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Invalid("learner needs states and actions".into()));
        }
        let n = n_states * n_actions;
        let q = if config.init_scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
            let scale = config.init_scale * config.temperature;
            (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
        } else {
            vec![0.0; n]
        };
        Ok(SoftQLearner {
            n_states,
            n_actions,
            gamma,
            expert_buffer: ReplayBuffer::new(config.buffer_capacity),
            policy_buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            q,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            initial_states: Vec::new(),
            step_count: 0,
        })
    }

    /// Adds `bias(s, a)` to every Q entry; Adam moments are untouched.
    pub fn shift_q(&mut self, bias: impl Fn(usize, usize) -> f64) {
        let na = self.n_actions;
        for (i, q) in self.q.iter_mut().enumerate() {
            *q += bias(i / na, i % na);
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn config(&self) -> &SoftQConfig {
        &self.config
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn value(&self, s: usize) -> f64 {
        soft_value(self.q_row(s), self.config.temperature)
    }

    pub fn snapshot(&self) -> QSnapshot {
        QSnapshot {
            n_states: self.n_states,
            n_actions: self.n_actions,
            temperature: self.config.temperature,
            divergence: self.config.divergence,
            q: self.q.clone(),
        }
    }

    fn check_transition(&self, t: &Transition) -> Result<()> {
        if t.s >= self.n_states || t.next >= self.n_states {
            return Err(Error::dim(
                "transition state",
                self.n_states,
                t.s.max(t.next),
            ));
        }
        if t.a >= self.n_actions {
            return Err(Error::dim("transition action", self.n_actions, t.a));
        }
        Ok(())
    }

    /// Replaces the expert data; initial flags also define the `v0` anchor states.
    pub fn set_expert(&mut self, transitions: &[Transition]) -> Result<()> {
        transitions
            .iter()
            .try_for_each(|t| self.check_transition(t))?;
        self.expert_buffer = ReplayBuffer::new(transitions.len().max(1));
        self.expert_buffer.extend(transitions.iter().copied());
        self.initial_states = transitions
            .iter()
            .filter(|t| t.initial)
            .map(|t| t.s)
            .collect();
        Ok(())
    }

    pub fn add_policy(&mut self, transitions: &[Transition]) -> Result<()> {
        transitions
            .iter()
            .try_for_each(|t| self.check_transition(t))?;
        self.policy_buffer.extend(transitions.iter().copied());
        Ok(())
    }

    /// `π(a|s) = softmax(Q(s, ·) / α)`.
    pub fn policy(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.q.len()];
        for (row, dst) in self
            .q
            .chunks(self.n_actions)
            .zip(out.chunks_mut(self.n_actions))
        {
            softmax_into(row, self.config.temperature, dst);
        }
        out
    }

    /// Like [`SoftQLearner::policy`] but failing on non-finite Q.
    pub fn extract_policy(&self) -> Result<Vec<f64>> {
        softmax_policy_from_q(&self.q, self.n_actions, self.config.temperature)
    }

    fn add_value_grad(&self, s: usize, weight: f64, grad: &mut [f64], probs: &mut [f64]) {
        if weight == 0.0 {
            return;
        }
        softmax_into(self.q_row(s), self.config.temperature, probs);
        let row = &mut grad[s * self.n_actions..(s + 1) * self.n_actions];
        for (g, p) in row.iter_mut().zip(probs.iter()) {
            *g += weight * p;
        }
    }

    /// Loss and gradient at the current Q on fixed batches.
    pub fn loss_and_grad(
        &self,
        expert: &[Transition],
        policy: &[Transition],
    ) -> Result<(f64, Vec<f64>)> {
        if expert.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let cfg = &self.config;
        let gamma = self.gamma;
        let c = cfg.regularizer_scale;
        let mut grad = vec![0.0; self.q.len()];
        let mut probs = vec![0.0; self.n_actions];
        let mut loss = 0.0;
        let n_e = expert.len() as f64;
        let reg_samples: &[&[Transition]] = if cfg.regularize_all {
            &[expert, policy]
        } else {
            &[expert]
        };
        let n_reg: f64 = reg_samples.iter().map(|b| b.len() as f64).sum();

        let residual = |t: &Transition| -> f64 {
            let boot = if t.done {
                0.0
            } else {
                gamma * self.value(t.next)
            };
            self.q[t.s * self.n_actions + t.a] - boot
        };
        // d r / d Q, scaled by `w`
        let mut add_residual_grad = |t: &Transition, w: f64, grad: &mut [f64]| {
            grad[t.s * self.n_actions + t.a] += w;
            if !t.done {
                self.add_value_grad(t.next, -gamma * w, grad, &mut probs);
            }
        };

        for t in expert {
            let r = residual(t);
            match cfg.divergence {
                Divergence::Chi2 => {
                    loss -= r / n_e;
                    add_residual_grad(t, -1.0 / n_e, &mut grad);
                }
                Divergence::TotalVariation => {
                    loss -= r.clamp(-c, c) / n_e;
                    if r.abs() < c {
                        add_residual_grad(t, -1.0 / n_e, &mut grad);
                    }
                }
            }
        }
        if cfg.divergence == Divergence::Chi2 {
            for batch in reg_samples {
                for t in batch.iter() {
                    let r = residual(t);
                    loss += r * r / (4.0 * c * n_reg);
                    add_residual_grad(t, 2.0 * r / (4.0 * c * n_reg), &mut grad);
                }
            }
        }
        let mut probs = vec![0.0; self.n_actions];
        match cfg.second_term {
            SecondTerm::V0 => {
                let n0 = self.initial_states.len();
                if n0 == 0 {
                    return Err(Error::Invalid(
                        "v0 anchor needs expert initial states".into(),
                    ));
                }
                let w = (1.0 - gamma) / n0 as f64;
                for &s in &self.initial_states {
                    loss += w * self.value(s);
                    self.add_value_grad(s, w, &mut grad, &mut probs);
                }
            }
            SecondTerm::Value => {
                let n_all = (expert.len() + policy.len()) as f64;
                for t in expert.iter().chain(policy) {
                    let w = 1.0 / n_all;
                    loss += w * self.value(t.s);
                    self.add_value_grad(t.s, w, &mut grad, &mut probs);
                    if !t.done {
                        loss -= w * gamma * self.value(t.next);
                        self.add_value_grad(t.next, -w * gamma, &mut grad, &mut probs);
                    }
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "inverse soft-Q loss is {loss} after {} steps (max |Q| = {:.3e})",
                self.step_count,
                self.q.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            )));
        }
        Ok((loss, grad))
    }

    /// One Adam step on a fresh batch; returns the pre-step loss.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        if self.expert_buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let b = self.config.batch_size;
        let expert = self.expert_buffer.sample(b, rng);
        let policy = if self.policy_buffer.is_empty() {
            Vec::new()
        } else {
            self.policy_buffer.sample(b, rng)
        };
        let (loss, grad) = self.loss_and_grad(&expert, &policy)?;
        self.apply_gradient(&grad);
        Ok(loss)
    }

    pub fn apply_gradient(&mut self, grad: &[f64]) {
        self.step_count += 1;
        let cfg = &self.config;
        if cfg.lr == 0.0 {
            return;
        }
        let t = self.step_count as i32;
        let bc1 = 1.0 - cfg.adam_beta1.powi(t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(t);
        for (i, &g) in grad.iter().enumerate() {
            self.adam_m[i] = cfg.adam_beta1 * self.adam_m[i] + (1.0 - cfg.adam_beta1) * g;
            self.adam_v[i] = cfg.adam_beta2 * self.adam_v[i] + (1.0 - cfg.adam_beta2) * g * g;
            let m_hat = self.adam_m[i] / bc1;
            let v_hat = self.adam_v[i] / bc2;
            self.q[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}
