//! Exact intent-aware occupancy measures for finite AMM + MDP pairs.
//!
//! The joint measure is
//! `ρ(s, a, x, x⁻) = (1 − γ) Σₜ γᵗ p(sᵗ = s, aᵗ = a, xᵗ = x, xᵗ⁻¹ = x⁻)`
//! with `x⁻ = #` at `t = 0`. It is accumulated by propagating the
//! time-indexed distribution `pᵗ(s, x, x⁻)` until the discounted tail drops
//! below the requested tolerance; the untouched tail mass is reported as
//! `residual` (at most `γ^horizon` for truncation after `horizon` steps).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AmmModel, DemoSet, FiniteMdp, StationaryPolicy};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    State,
    Action,
    Intent,
    PrevIntent,
}

/// `ρ(s, a, x, x⁻)`, stored at `((s * |A| + a) * |X| + x) * (|X| + 1) + slot(x⁻)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOccupancy {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_intents: usize,
    pub rho: Vec<f64>,
    pub gamma: f64,
    pub residual: f64,
}

impl JointOccupancy {
    fn zeros(n_states: usize, n_actions: usize, n_intents: usize, gamma: f64) -> Self {
        JointOccupancy {
            n_states,
            n_actions,
            n_intents,
            rho: vec![0.0; n_states * n_actions * n_intents * (n_intents + 1)],
            gamma,
            residual: 0.0,
        }
    }

    pub fn index(&self, s: usize, a: usize, x: usize, slot: usize) -> usize {
        ((s * self.n_actions + a) * self.n_intents + x) * (self.n_intents + 1) + slot
    }

    pub fn get(&self, s: usize, a: usize, x: usize, slot: usize) -> f64 {
        self.rho[self.index(s, a, x, slot)]
    }

    pub fn total(&self) -> f64 {
        self.rho.iter().sum()
    }

    /// The same measure rescaled to unit mass.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        self.rho.iter().map(|v| v / total).collect()
    }

    pub fn as_marginal(&self) -> Marginal {
        Marginal {
            axes: vec![Axis::State, Axis::Action, Axis::Intent, Axis::PrevIntent],
            dims: vec![
                self.n_states,
                self.n_actions,
                self.n_intents,
                self.n_intents + 1,
            ],
            data: self.rho.clone(),
        }
    }

    pub fn marginalize(&self, keep: &[Axis]) -> Result<Marginal> {
        self.as_marginal().marginalize(keep)
    }
}

/// A table over a subset of the joint axes, row-major in `axes` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub axes: Vec<Axis>,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Marginal {
    /// Sums out every axis not listed in `keep`; the result follows `keep`'s order.
    pub fn marginalize(&self, keep: &[Axis]) -> Result<Marginal> {
        if keep.is_empty() {
            return Err(Error::Invalid(
                "marginalize needs at least one kept axis".into(),
            ));
        }
        let mut positions = Vec::with_capacity(keep.len());
        for (i, axis) in keep.iter().enumerate() {
            if keep[..i].contains(axis) {
                return Err(Error::Invalid(format!("axis {axis:?} listed twice")));
            }
            let pos = self
                .axes
                .iter()
                .position(|a| a == axis)
                .ok_or_else(|| Error::Invalid(format!("axis {axis:?} not present")))?;
            positions.push(pos);
        }
        let dims: Vec<usize> = positions.iter().map(|&p| self.dims[p]).collect();
        let mut data = vec![0.0; dims.iter().product()];
        let mut coord = vec![0usize; self.dims.len()];
        for &v in &self.data {
            let mut idx = 0;
            for (&p, &d) in positions.iter().zip(&dims) {
                idx = idx * d + coord[p];
            }
            data[idx] += v;
            for k in (0..coord.len()).rev() {
                coord[k] += 1;
                if coord[k] < self.dims[k] {
                    break;
                }
                coord[k] = 0;
            }
        }
        Ok(Marginal {
            axes: keep.to_vec(),
            dims,
            data,
        })
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("tolerance must be > 0, got {tol}")))
    }
}

/// Number of propagation steps after which `γᵗ⁺¹ / (1 − γ) < tol`.
fn steps_for(gamma: f64, tol: f64) -> usize {
    let mut t = 0usize;
    let mut g = gamma;
    while g / (1.0 - gamma) >= tol {
        g *= gamma;
        t += 1;
    }
    t
}

/// `pᵗ(s, x, x⁻)` propagation shared by the joint and shifted measures.
struct IntentChain<'a> {
    mdp: &'a FiniteMdp,
    model: &'a AmmModel,
    /// `(s * |X| + x) * (|X| + 1) + slot`
    p: Vec<f64>,
}

impl<'a> IntentChain<'a> {
    fn new(mdp: &'a FiniteMdp, model: &'a AmmModel) -> Self {
        let nx = model.n_intents();
        let np = nx + 1;
        let mut p = vec![0.0; mdp.n_states() * nx * np];
        for (s, &mu) in mdp.mu0().iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            for (x, &z) in model.zeta_row(s, None).iter().enumerate() {
                p[(s * nx + x) * np + nx] = mu * z;
            }
        }
        IntentChain { mdp, model, p }
    }

    fn step(&mut self) {
        let (ns, na, nx) = (
            self.mdp.n_states(),
            self.mdp.n_actions(),
            self.model.n_intents(),
        );
        let np = nx + 1;
        // n(s', x) = Σ_{s,a} m(s, x) π(a|s,x) T(s'|s,a)
        let mut carried = vec![0.0; ns * nx];
        for s in 0..ns {
            for x in 0..nx {
                let base = (s * nx + x) * np;
                let m: f64 = self.p[base..base + np].iter().sum();
                if m == 0.0 {
                    continue;
                }
                for (a, &pa) in self.model.pi_row(s, x).iter().enumerate().take(na) {
                    if pa == 0.0 {
                        continue;
                    }
                    for &(next, pt) in self.mdp.successors(s, a) {
                        carried[next * nx + x] += m * pa * pt;
                    }
                }
            }
        }
        self.p.fill(0.0);
        for s in 0..ns {
            for prev in 0..nx {
                let c = carried[s * nx + prev];
                if c == 0.0 {
                    continue;
                }
                for (x, &z) in self.model.zeta_slot_row(s, prev).iter().enumerate() {
                    self.p[(s * nx + x) * np + prev] += c * z;
                }
            }
        }
    }
}

/// Exact normalized intent-aware occupancy of `model` acting in `mdp`.
pub fn exact_occupancy(mdp: &FiniteMdp, model: &AmmModel, tol: f64) -> Result<JointOccupancy> {
    check_tol(tol)?;
    model.ensure_valid(mdp)?;
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), model.n_intents());
    let np = nx + 1;
    let gamma = mdp.gamma();
    let steps = steps_for(gamma, tol);
    let mut out = JointOccupancy::zeros(ns, na, nx, gamma);
    let mut chain = IntentChain::new(mdp, model);
    let mut weight = 1.0 - gamma;
    for t in 0..=steps {
        for s in 0..ns {
            for x in 0..nx {
                let pi = model.pi_row(s, x);
                let base = (s * nx + x) * np;
                for slot in 0..np {
                    let m = chain.p[base + slot];
                    if m == 0.0 {
                        continue;
                    }
                    for (a, &pa) in pi.iter().enumerate() {
                        let i = out.index(s, a, x, slot);
                        out.rho[i] += weight * m * pa;
                    }
                }
            }
        }
        if t < steps {
            chain.step();
            weight *= gamma;
        }
    }
    out.residual = weight * gamma / (1.0 - gamma);
    Ok(out)
}

/// Normalized previous-step measure `ρ⁻(s, a, x)`: the discounted frequency
/// with which `(s, a, x)` occupies the slot `t − 1`, built from the explicit
/// two-slice mass `p(sᵗ⁻¹, aᵗ⁻¹, xᵗ⁻¹, sᵗ, aᵗ, xᵗ)` with the current slice
/// summed out. Layout `(s * |A| + a) * |X| + x`.
pub fn shifted_occupancy(mdp: &FiniteMdp, model: &AmmModel, tol: f64) -> Result<Vec<f64>> {
    check_tol(tol)?;
    model.ensure_valid(mdp)?;
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), model.n_intents());
    let np = nx + 1;
    let gamma = mdp.gamma();
    let steps = steps_for(gamma, tol) + 1;
    let mut out = vec![0.0; ns * na * nx];
    let mut chain = IntentChain::new(mdp, model);
    // weight of slot t, applied to the pair (t − 1, t)
    let mut weight = (1.0 - gamma) * gamma;
    for _ in 1..=steps {
        for sp in 0..ns {
            for xp in 0..nx {
                let base = (sp * nx + xp) * np;
                let m: f64 = chain.p[base..base + np].iter().sum();
                if m == 0.0 {
                    continue;
                }
                for (ap, &pa) in model.pi_row(sp, xp).iter().enumerate() {
                    let prev_mass = m * pa;
                    if prev_mass == 0.0 {
                        continue;
                    }
                    let mut pair_mass = 0.0;
                    for &(s, pt) in mdp.successors(sp, ap) {
                        for (x, &z) in model.zeta_slot_row(s, xp).iter().enumerate() {
                            let current: f64 = model.pi_row(s, x).iter().sum();
                            pair_mass += prev_mass * pt * z * current;
                        }
                    }
                    out[(sp * na + ap) * nx + xp] += weight * pair_mass;
                }
            }
        }
        chain.step();
        weight *= gamma;
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("shifted measure has no mass".into()));
    }
    Ok(out.into_iter().map(|v| v / total).collect())
}

/// Exact normalized occupancy `ρ(s, a)` of a stationary policy.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionOccupancy {
    pub n_states: usize,
    pub n_actions: usize,
    pub rho: Vec<f64>,
    pub residual: f64,
}

impl StateActionOccupancy {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.rho[s * self.n_actions + a]
    }
}

pub fn policy_occupancy(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
    tol: f64,
) -> Result<StateActionOccupancy> {
    check_tol(tol)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if policy.n_states() != ns {
        return Err(Error::dim("policy states", ns, policy.n_states()));
    }
    if policy.n_actions() != na {
        return Err(Error::dim("policy actions", na, policy.n_actions()));
    }
    let gamma = mdp.gamma();
    let steps = steps_for(gamma, tol);
    let mut d = mdp.mu0().to_vec();
    let mut rho = vec![0.0; ns * na];
    let mut weight = 1.0 - gamma;
    for t in 0..=steps {
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                rho[s * na + a] += weight * d[s] * pa;
            }
        }
        if t == steps {
            break;
        }
        let mut next = vec![0.0; ns];
        for (s, &ds) in d.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                for &(n, pt) in mdp.successors(s, a) {
                    next[n] += ds * pa * pt;
                }
            }
        }
        d = next;
        weight *= gamma;
    }
    Ok(StateActionOccupancy {
        n_states: ns,
        n_actions: na,
        rho,
        residual: weight * gamma / (1.0 - gamma),
    })
}

/// An AMM recovered from an occupancy measure. Rows whose conditioning mass
/// is zero are filled uniform and listed.
#[derive(Clone, Debug)]
pub struct RecoveredModel {
    pub model: AmmModel,
    /// `(s, x)` rows of π with `ρ(s, x) = 0`.
    pub unvisited_pi: Vec<(usize, usize)>,
    /// `(s, slot(x⁻))` rows of ζ with `ρ(s, x⁻) = 0`.
    pub unvisited_zeta: Vec<(usize, usize)>,
}

impl RecoveredModel {
    pub fn pi_visited(&self, s: usize, x: usize) -> bool {
        !self.unvisited_pi.contains(&(s, x))
    }

    pub fn zeta_visited(&self, s: usize, slot: usize) -> bool {
        !self.unvisited_zeta.contains(&(s, slot))
    }
}

/// `π(a|s,x) = ρ(s,a,x) / ρ(s,x)` and `ζ(x|s,x⁻) = ρ(s,x,x⁻) / ρ(s,x⁻)`.
pub fn recover_model(joint: &JointOccupancy) -> Result<RecoveredModel> {
    let (ns, na, nx) = (joint.n_states, joint.n_actions, joint.n_intents);
    let np = nx + 1;
    let sax = joint.marginalize(&[Axis::State, Axis::Intent, Axis::Action])?;
    let sxp = joint.marginalize(&[Axis::State, Axis::PrevIntent, Axis::Intent])?;
    let mut model = AmmModel::uniform(ns, na, nx);
    let mut unvisited_pi = Vec::new();
    let mut unvisited_zeta = Vec::new();
    for s in 0..ns {
        for x in 0..nx {
            let row = &sax.data[(s * nx + x) * na..(s * nx + x + 1) * na];
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                for (dst, &v) in model.pi_row_mut(s, x).iter_mut().zip(row) {
                    *dst = v / mass;
                }
            } else {
                unvisited_pi.push((s, x));
            }
        }
        for slot in 0..np {
            let row = &sxp.data[(s * np + slot) * nx..(s * np + slot + 1) * nx];
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                for (dst, &v) in model.zeta_slot_row_mut(s, slot).iter_mut().zip(row) {
                    *dst = v / mass;
                }
            } else {
                unvisited_zeta.push((s, slot));
            }
        }
    }
    Ok(RecoveredModel {
        model,
        unvisited_pi,
        unvisited_zeta,
    })
}

/// Discount-weighted, normalized `ρ_E(s, a, x, x⁻)` counted from demonstrations
/// that carry intents (labeled or inferred).
pub fn empirical_occupancy(
    demos: &DemoSet,
    n_states: usize,
    n_actions: usize,
    n_intents: usize,
    gamma: f64,
) -> Result<JointOccupancy> {
    let mut out = JointOccupancy::zeros(n_states, n_actions, n_intents, gamma);
    for (i, t) in demos.trajectories.iter().enumerate() {
        let intents = t
            .intents
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("trajectory {i} has no intents")))?;
        let mut w = 1.0 - gamma;
        for step in 0..t.len() {
            let slot = if step == 0 {
                n_intents
            } else {
                intents[step - 1]
            };
            let idx = out.index(t.states[step], t.actions[step], intents[step], slot);
            out.rho[idx] += w;
            w *= gamma;
        }
    }
    let total = out.total();
    if !(total > 0.0) {
        return Err(Error::Invalid("no demonstration steps".into()));
    }
    for v in out.rho.iter_mut() {
        *v /= total;
    }
    Ok(out)
}

/// One-step propagation `Σ_{s⁻,a⁻} π(a|s,x) ζ(x|s,x⁻) T(s|s⁻,a⁻) ρ(s⁻,a⁻,x⁻)` of
/// an `(s, a, x)` measure into a joint table (entries with `x⁻ = #` are zero).
/// `sax` uses the layout `(s * |A| + a) * |X| + x`.
pub fn propagated_joint(mdp: &FiniteMdp, model: &AmmModel, sax: &[f64]) -> Result<JointOccupancy> {
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), model.n_intents());
    if sax.len() != ns * na * nx {
        return Err(Error::dim("(s, a, x) measure", ns * na * nx, sax.len()));
    }
    let mut out = JointOccupancy::zeros(ns, na, nx, mdp.gamma());
    for sp in 0..ns {
        for ap in 0..na {
            for xp in 0..nx {
                let m = sax[(sp * na + ap) * nx + xp];
                if m == 0.0 {
                    continue;
                }
                for &(s, pt) in mdp.successors(sp, ap) {
                    for (x, &z) in model.zeta_slot_row(s, xp).iter().enumerate() {
                        for (a, &pa) in model.pi_row(s, x).iter().enumerate() {
                            let i = out.index(s, a, x, xp);
                            out.rho[i] += m * pt * z * pa;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `π(a|s,x) ρ(s,x,x⁻)`; `sxp` uses the layout `(s * (|X|+1) + slot) * |X| + x`.
pub fn policy_completed_joint(model: &AmmModel, sxp: &[f64]) -> Result<JointOccupancy> {
    let (ns, na, nx) = (model.n_states(), model.n_actions(), model.n_intents());
    let np = nx + 1;
    if sxp.len() != ns * np * nx {
        return Err(Error::dim("(s, x⁻, x) measure", ns * np * nx, sxp.len()));
    }
    let mut out = JointOccupancy::zeros(ns, na, nx, f64::NAN);
    for s in 0..ns {
        for slot in 0..np {
            for x in 0..nx {
                let m = sxp[(s * np + slot) * nx + x];
                for (a, &pa) in model.pi_row(s, x).iter().enumerate() {
                    let i = out.index(s, a, x, slot);
                    out.rho[i] = pa * m;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    Chi2,
    TotalVariation,
    Kl,
}

impl std::str::FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi2" => Ok(DivergenceKind::Chi2),
            "total_variation" | "tv" => Ok(DivergenceKind::TotalVariation),
            "kl" => Ok(DivergenceKind::Kl),
            other => Err(Error::Invalid(format!("unknown divergence {other:?}"))),
        }
    }
}

const NORMALIZATION_TOL: f64 = 1e-6;

/// `D_f(p ‖ q) = Σ q f(p / q)`.
///
/// χ² is Pearson's `Σ (p − q)² / q`; any entry with `q = 0 < p` makes χ² and
/// KL return `+∞` rather than failing.
pub fn f_divergence(p: &[f64], q: &[f64], kind: DivergenceKind) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("divergence operands", p.len(), q.len()));
    }
    for (name, t) in [("p", p), ("q", q)] {
        let total: f64 = t.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL || t.iter().any(|&v| v < 0.0) {
            return Err(Error::Invalid(format!(
                "{name} is not a distribution (mass {total})"
            )));
        }
    }
    let value = match kind {
        DivergenceKind::TotalVariation => {
            0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
        }
        DivergenceKind::Chi2 => {
            let mut acc = 0.0;
            for (&a, &b) in p.iter().zip(q) {
                if b > 0.0 {
                    acc += (a - b).powi(2) / b;
                } else if a > 0.0 {
                    return Ok(f64::INFINITY);
                }
            }
            acc
        }
        DivergenceKind::Kl => {
            let mut acc = 0.0;
            for (&a, &b) in p.iter().zip(q) {
                if a > 0.0 {
                    if b > 0.0 {
                        acc += a * (a / b).ln();
                    } else {
                        return Ok(f64::INFINITY);
                    }
                }
            }
            acc
        }
    };
    // Rounding can leave tiny negative KL values for p ≈ q.
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_state_geometric_split() {
        let mut b = MdpBuilder::new(1, 1, 0.5, 10);
        b.transition(0, 0, vec![(0, 1.0)]).initial(vec![1.0]);
        let mdp = b.build().unwrap();
        let m = AmmModel::uniform(1, 1, 1);
        let occ = exact_occupancy(&mdp, &m, 1e-12).unwrap();
        assert_abs_diff_eq!(occ.get(0, 0, 0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(occ.get(0, 0, 0, 0), 0.5, epsilon = 1e-12);
        assert!(occ.residual < 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let p = [1.0, 0.0];
        let q = [0.5, 0.5];
        let tv = f_divergence(&p, &q, DivergenceKind::TotalVariation).unwrap();
        let kl = f_divergence(&p, &q, DivergenceKind::Kl).unwrap();
        let chi = f_divergence(&p, &q, DivergenceKind::Chi2).unwrap();
        assert_abs_diff_eq!(tv, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(chi, 1.0, epsilon = 1e-15);
        for k in [
            DivergenceKind::TotalVariation,
            DivergenceKind::Kl,
            DivergenceKind::Chi2,
        ] {
            assert_eq!(f_divergence(&q, &q, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn disjoint_support_is_infinite() {
        let p = [0.0, 1.0];
        let q = [1.0, 0.0];
        assert!(f_divergence(&p, &q, DivergenceKind::Chi2)
            .unwrap()
            .is_infinite());
        assert!(f_divergence(&p, &q, DivergenceKind::Kl)
            .unwrap()
            .is_infinite());
        assert_eq!(
            f_divergence(&p, &q, DivergenceKind::TotalVariation).unwrap(),
            1.0
        );
    }

    #[test]
    fn divergence_shape_mismatch() {
        assert!(matches!(
            f_divergence(&[1.0], &[0.5, 0.5], DivergenceKind::Kl),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn marginalize_rejects_empty_axes() {
        let occ = JointOccupancy::zeros(2, 2, 1, 0.9);
        assert!(occ.marginalize(&[]).is_err());
    }

    #[test]
    fn unreachable_state_is_flagged() {
        let mut b = MdpBuilder::new(2, 1, 0.9, 10);
        b.transition(0, 0, vec![(0, 1.0)])
            .transition(1, 0, vec![(1, 1.0)])
            .initial(vec![1.0, 0.0]);
        let mdp = b.build().unwrap();
        let m = AmmModel::uniform(2, 1, 2);
        let rec = recover_model(&exact_occupancy(&mdp, &m, 1e-10).unwrap()).unwrap();
        assert!(rec.unvisited_pi.contains(&(1, 0)));
        assert!(rec.unvisited_zeta.contains(&(1, 2)));
        assert_eq!(rec.model.pi_row(1, 0), &[1.0]);
        assert_eq!(rec.model.zeta_slot_row(1, 2), &[0.5, 0.5]);
    }

    #[test]
    fn uniform_model_roundtrips() {
        let mut b = MdpBuilder::new(2, 2, 0.8, 10);
        b.transition(0, 0, vec![(1, 1.0)])
            .transition(0, 1, vec![(0, 1.0)])
            .transition(1, 0, vec![(0, 0.3), (1, 0.7)])
            .transition(1, 1, vec![(0, 1.0)])
            .initial(vec![0.5, 0.5]);
        let mdp = b.build().unwrap();
        let m = AmmModel::uniform(2, 2, 2);
        let rec = recover_model(&exact_occupancy(&mdp, &m, 1e-12).unwrap()).unwrap();
        for (a, b) in rec.model.pi().iter().zip(m.pi()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in rec.model.zeta().iter().zip(m.zeta()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
