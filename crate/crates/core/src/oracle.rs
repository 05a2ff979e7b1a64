//! Self-checks of the exact occupancy machinery on one (MDP, AMM) pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::derive_seed;
use crate::factored::{build_intent_informed_mdp, build_intent_transition_mdp};
use crate::mdp::{validate_amm, AmmModel, FiniteMdp, MdpBuilder, StationaryPolicy};
use crate::occupancy::{exact_occupancy, policy_occupancy, recover_model, shifted_occupancy, Axis};
use crate::oiql::{build_joint_mdp, joint_policy};

/// Entrywise tolerance for identities that hold exactly up to truncation.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Entrywise tolerance for the augmented-MDP reductions.
pub const REDUCTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_intents: usize,
    pub model_violations: usize,
    pub truncation_residual: f64,
    /// `|Σ ρ − 1|`.
    pub normalization_error: f64,
    /// Largest violation of `ρ(s') = (1 − γ) μ₀(s') + γ Σ T(s' | s, a) ρ(s, a)`.
    pub flow_residual: f64,
    /// `ρ(s)` summed directly versus through `ρ(s, a)`.
    pub marginal_error: f64,
    /// `max |ρ⁻(s, a, x) − ρ(s, a, x)|`.
    pub shift_error: f64,
    /// Largest table difference after recovering the model from `ρ`, over
    /// visited rows.
    pub recover_error: f64,
    pub intent_informed_error: f64,
    pub intent_transition_error: f64,
    pub joint_error: f64,
    pub passed: bool,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn oracle_report(mdp: &FiniteMdp, model: &AmmModel, tol: f64) -> Result<OracleReport> {
    let violations = validate_amm(model, mdp)?.violations.len();
    let joint = exact_occupancy(mdp, model, tol)?;
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), model.n_intents());
    let np = nx + 1;
    let gamma = mdp.gamma();

    let sa = joint.marginalize(&[Axis::State, Axis::Action])?.data;
    let s_direct = joint.marginalize(&[Axis::State])?.data;
    let s_via_sa: Vec<f64> = sa.chunks(na).map(|r| r.iter().sum()).collect();
    let marginal_error = max_abs_diff(&s_direct, &s_via_sa);

    let mut inflow: Vec<f64> = mdp.mu0().iter().map(|m| (1.0 - gamma) * m).collect();
    for s in 0..ns {
        for a in 0..na {
            for &(next, p) in mdp.successors(s, a) {
                inflow[next] += gamma * p * sa[s * na + a];
            }
        }
    }
    let flow_residual = max_abs_diff(&s_direct, &inflow);

    let sax = joint
        .marginalize(&[Axis::State, Axis::Action, Axis::Intent])?
        .data;
    let shift_error = max_abs_diff(&shifted_occupancy(mdp, model, tol)?, &sax);

    let recovered = recover_model(&joint)?;
    let mut recover_error: f64 = 0.0;
    for s in 0..ns {
        for x in 0..nx {
            if recovered.pi_visited(s, x) {
                recover_error = recover_error.max(max_abs_diff(
                    recovered.model.pi_row(s, x),
                    model.pi_row(s, x),
                ));
            }
        }
        for slot in 0..np {
            if recovered.zeta_visited(s, slot) {
                recover_error = recover_error.max(max_abs_diff(
                    recovered.model.zeta_slot_row(s, slot),
                    model.zeta_slot_row(s, slot),
                ));
            }
        }
    }

    let informed = policy_occupancy(
        &build_intent_informed_mdp(mdp, model)?,
        &StationaryPolicy::from_table(ns * nx, na, model.pi().to_vec())?,
        tol,
    )?;
    let sxa = joint
        .marginalize(&[Axis::State, Axis::Intent, Axis::Action])?
        .data;
    let intent_informed_error = max_abs_diff(&informed.rho, &sxa);

    let transition = policy_occupancy(
        &build_intent_transition_mdp(mdp, model)?,
        &StationaryPolicy::from_table(ns * np, nx, model.zeta().to_vec())?,
        tol,
    )?;
    let spx = joint
        .marginalize(&[Axis::State, Axis::PrevIntent, Axis::Intent])?
        .data;
    let intent_transition_error = max_abs_diff(&transition.rho, &spx);

    let joint_occ = policy_occupancy(
        &build_joint_mdp(mdp, nx)?,
        &StationaryPolicy::from_table(ns * np, nx * na, joint_policy(model))?,
        tol,
    )?;
    let spxa = joint
        .marginalize(&[Axis::State, Axis::PrevIntent, Axis::Intent, Axis::Action])?
        .data;
    let joint_error = max_abs_diff(&joint_occ.rho, &spxa);

    let normalization_error = (joint.total() - 1.0).abs();
    let passed = violations == 0
        && normalization_error <= joint.residual + IDENTITY_TOL
        && flow_residual <= IDENTITY_TOL
        && marginal_error <= IDENTITY_TOL
        && shift_error <= IDENTITY_TOL
        && recover_error <= IDENTITY_TOL
        && intent_informed_error
            .max(intent_transition_error)
            .max(joint_error)
            <= REDUCTION_TOL;
    Ok(OracleReport {
        n_states: ns,
        n_actions: na,
        n_intents: nx,
        model_violations: violations,
        truncation_residual: joint.residual,
        normalization_error,
        flow_residual,
        marginal_error,
        shift_error,
        recover_error,
        intent_informed_error,
        intent_transition_error,
        joint_error,
        passed,
    })
}

/// A random probability vector of length `n`; each entry is zeroed with
/// probability `sparsity` (one entry always survives).
fn random_simplex<R: Rng>(n: usize, sparsity: f64, rng: &mut R) -> Vec<f64> {
    let keep = rng.gen_range(0..n);
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            if i != keep && rng.gen_bool(sparsity) {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= total);
    v
}

/// Random instance with at most the given sizes: sparse dynamics, some
/// absorbing states, μ₀ on a random subset, and partly sparse π and ζ rows.
pub fn random_instance(
    seed: u64,
    max_states: usize,
    max_actions: usize,
    max_intents: usize,
) -> Result<(FiniteMdp, AmmModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(1..=max_states.max(1));
    let na = rng.gen_range(1..=max_actions.max(1));
    let nx = rng.gen_range(1..=max_intents.max(1));
    let gamma = rng.gen_range(0.5..0.95);
    let mut b = MdpBuilder::new(ns, na, gamma, 50);
    for s in 0..ns {
        for a in 0..na {
            let row = random_simplex(ns, 0.6, &mut rng)
                .into_iter()
                .enumerate()
                .filter(|&(_, p)| p > 0.0)
                .collect();
            b.transition(s, a, row)
                .reward(s, a, rng.gen_range(-1.0..1.0));
        }
    }
    for s in 1..ns {
        if rng.gen_bool(0.15) {
            b.terminal(s);
        }
    }
    b.initial(random_simplex(ns, 0.5, &mut rng));
    let mdp = b.build()?;
    let zeta = (0..ns * (nx + 1))
        .flat_map(|_| random_simplex(nx, 0.3, &mut rng))
        .collect();
    let pi = (0..ns * nx)
        .flat_map(|_| random_simplex(na, 0.3, &mut rng))
        .collect();
    Ok((mdp, AmmModel::from_tables(ns, na, nx, zeta, pi)?))
}

/// Outcome of [`oracle_report`] over many random instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub cases: usize,
    pub seed: u64,
    /// Indices of cases whose report did not pass.
    pub failed_cases: Vec<usize>,
    /// Largest value of each error field over all cases.
    pub worst: OracleReport,
    pub passed: bool,
}

/// Case `i` uses `random_instance(derive_seed(seed, i), 10, 4, 3)`.
pub fn random_battery(cases: usize, seed: u64, tol: f64) -> Result<BatteryReport> {
    let mut failed_cases = Vec::new();
    let mut worst: Option<OracleReport> = None;
    for i in 0..cases {
        let (mdp, model) = random_instance(derive_seed(seed, i as u64), 10, 4, 3)?;
        let r = oracle_report(&mdp, &model, tol)?;
        if !r.passed {
            failed_cases.push(i);
        }
        worst = Some(match worst {
            None => r,
            Some(w) => OracleReport {
                n_states: w.n_states.max(r.n_states),
                n_actions: w.n_actions.max(r.n_actions),
                n_intents: w.n_intents.max(r.n_intents),
                model_violations: w.model_violations.max(r.model_violations),
                truncation_residual: w.truncation_residual.max(r.truncation_residual),
                normalization_error: w.normalization_error.max(r.normalization_error),
                flow_residual: w.flow_residual.max(r.flow_residual),
                marginal_error: w.marginal_error.max(r.marginal_error),
                shift_error: w.shift_error.max(r.shift_error),
                recover_error: w.recover_error.max(r.recover_error),
                intent_informed_error: w.intent_informed_error.max(r.intent_informed_error),
                intent_transition_error: w.intent_transition_error.max(r.intent_transition_error),
                joint_error: w.joint_error.max(r.joint_error),
                passed: w.passed && r.passed,
            },
        });
    }
    let worst = worst
        .ok_or_else(|| crate::error::Error::Invalid("battery needs at least one case".into()))?;
    Ok(BatteryReport {
        cases,
        seed,
        passed: failed_cases.is_empty(),
        failed_cases,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ToySpec;
    use crate::occupancy::DEFAULT_TOL;

    #[test]
    fn toy_expert_passes() {
        let toy = ToySpec::default();
        let r = oracle_report(&toy.build().unwrap(), &toy.expert().unwrap(), 1e-12).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn random_battery_passes() {
        let b = random_battery(20, 7, DEFAULT_TOL).unwrap();
        assert!(b.passed, "{b:?}");
    }
}
