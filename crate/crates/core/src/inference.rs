//! MAP intent decoding.
//!
//! Both decoders score a path as
//! `log ζ(x⁰|s⁰,#) + log π(a⁰|s⁰,x⁰) + Σₜ [log ζ(xᵗ|sᵗ,xᵗ⁻¹) + log π(aᵗ|sᵗ,xᵗ)]`,
//! summed in that order, so equal-scoring paths compare bit-identically.
//! Ties go to the path that is smallest when compared from the last step
//! backwards, which is what a smallest-index Viterbi backtrace produces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mdp::{AmmModel, DemoSet, Trajectory};

/// Largest number of paths [`brute_force_decode`] will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedPath {
    pub intents: Vec<usize>,
    pub log_prob: f64,
    /// Every path has probability zero; `intents` is then all zeros.
    pub impossible: bool,
}

fn check_inputs(traj: &Trajectory, model: &AmmModel) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::Invalid("cannot decode an empty trajectory".into()));
    }
    if traj.actions.len() != traj.states.len() {
        return Err(Error::dim(
            "trajectory actions",
            traj.states.len(),
            traj.actions.len(),
        ));
    }
    if let Some(&s) = traj.states.iter().find(|&&s| s >= model.n_states()) {
        return Err(Error::dim("trajectory state id", model.n_states(), s));
    }
    if let Some(&a) = traj.actions.iter().find(|&&a| a >= model.n_actions()) {
        return Err(Error::dim("trajectory action id", model.n_actions(), a));
    }
    Ok(())
}

/// Viterbi over generic log-space factors.
///
/// `init(x)` scores the first step's intent transition, `trans(t, x⁻, x)` the
/// transition into step `t ≥ 1`, and `emit(t, x)` the action at step `t`.
pub fn viterbi_log_space(
    len: usize,
    n_intents: usize,
    init: impl Fn(usize) -> f64,
    trans: impl Fn(usize, usize, usize) -> f64,
    emit: impl Fn(usize, usize) -> f64,
) -> DecodedPath {
    let mut delta: Vec<f64> = (0..n_intents).map(|x| init(x) + emit(0, x)).collect();
    let mut back = vec![0usize; len.saturating_sub(1) * n_intents];
    let mut next = vec![0.0; n_intents];
    for t in 1..len {
        for x in 0..n_intents {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (xp, &d) in delta.iter().enumerate() {
                let v = d + trans(t, xp, x);
                if v > best {
                    best = v;
                    arg = xp;
                }
            }
            back[(t - 1) * n_intents + x] = arg;
            next[x] = best + emit(t, x);
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (x, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = x;
        }
    }
    if best == f64::NEG_INFINITY {
        return DecodedPath {
            intents: vec![0; len],
            log_prob: f64::NEG_INFINITY,
            impossible: true,
        };
    }
    let mut intents = vec![0; len];
    intents[len - 1] = last;
    for t in (1..len).rev() {
        intents[t - 1] = back[(t - 1) * n_intents + intents[t]];
    }
    DecodedPath {
        intents,
        log_prob: best,
        impossible: false,
    }
}

/// MAP intent sequence of `traj` under `model` in `O(h |X|²)`.
pub fn viterbi_decode(traj: &Trajectory, model: &AmmModel) -> Result<DecodedPath> {
    check_inputs(traj, model)?;
    let s = &traj.states;
    let a = &traj.actions;
    Ok(viterbi_log_space(
        traj.len(),
        model.n_intents(),
        |x| model.zeta_row(s[0], None)[x].ln(),
        |t, xp, x| model.zeta_slot_row(s[t], xp)[x].ln(),
        |t, x| model.pi_row(s[t], x)[a[t]].ln(),
    ))
}

/// Exhaustive MAP search; intent sequences are enumerated with `x⁰` as the
/// fastest-varying digit and replaced only on a strict improvement.
pub fn brute_force_decode(traj: &Trajectory, model: &AmmModel) -> Result<DecodedPath> {
    check_inputs(traj, model)?;
    let nx = model.n_intents();
    let len = traj.len();
    let paths = (nx as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if paths > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap {
            paths,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let s = &traj.states;
    let a = &traj.actions;
    let mut path = vec![0usize; len];
    let mut best = f64::NEG_INFINITY;
    let mut best_path = vec![0usize; len];
    for _ in 0..paths {
        let mut score =
            model.zeta_row(s[0], None)[path[0]].ln() + model.pi_row(s[0], path[0])[a[0]].ln();
        for t in 1..len {
            score += model.zeta_slot_row(s[t], path[t - 1])[path[t]].ln();
            score += model.pi_row(s[t], path[t])[a[t]].ln();
        }
        if score > best {
            best = score;
            best_path.copy_from_slice(&path);
        }
        for digit in path.iter_mut() {
            *digit += 1;
            if *digit < nx {
                break;
            }
            *digit = 0;
        }
    }
    Ok(DecodedPath {
        impossible: best == f64::NEG_INFINITY,
        intents: best_path,
        log_prob: best,
    })
}

/// Fills every unlabeled trajectory with its Viterbi path; the first
/// `n_labeled` trajectories keep their ground-truth intents.
pub fn augment_demos(demos: &DemoSet, model: &AmmModel) -> Result<DemoSet> {
    augment_demos_with(demos, model, Execution::default())
}

pub fn augment_demos_with(demos: &DemoSet, model: &AmmModel, exec: Execution) -> Result<DemoSet> {
    let decoded = exec.map(demos.len(), |i| -> Result<Option<Vec<usize>>> {
        if i < demos.n_labeled {
            return Ok(None);
        }
        viterbi_decode(&demos.trajectories[i], model).map(|p| Some(p.intents))
    });
    let mut out = demos.clone();
    for (t, d) in out.trajectories.iter_mut().zip(decoded) {
        if let Some(intents) = d? {
            t.intents = Some(intents);
        }
    }
    Ok(out)
}
