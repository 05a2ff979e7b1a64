//! Joint trainer: a single inverse soft-Q learner over `w = (s, x⁻)` with
//! compound actions `(a, x)`, projected back to a factored AMM.
//!
//! Joint state id `w = s * (|X| + 1) + slot(x⁻)`; joint action id `x * |A| + a`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::factored::push_steps;
use crate::math::{sample_categorical, sample_sparse};
use crate::mdp::{AmmModel, DemoSet, FiniteMdp, MdpBuilder, Trajectory};
use crate::soft_q::{SoftQLearner, Transition};
use crate::training::{check_demos, run_em, AccuracyProbe, Backend, IdilConfig, TrainingLog};

/// `((s, x⁻), (a, x)) → (s', x)` with probability `T(s' | s, a)`; rewards
/// copy `r(s, a)` and μ₀ sits on `(s, #)`.
pub fn build_joint_mdp(mdp: &FiniteMdp, n_intents: usize) -> Result<FiniteMdp> {
    if n_intents == 0 {
        return Err(Error::Invalid("need at least one intent".into()));
    }
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), n_intents);
    let np = nx + 1;
    let mut b = MdpBuilder::new(ns * np, na * nx, mdp.gamma(), mdp.horizon());
    for s in 0..ns {
        for slot in 0..np {
            let w = s * np + slot;
            for x in 0..nx {
                for a in 0..na {
                    let row = mdp
                        .successors(s, a)
                        .iter()
                        .map(|&(next, p)| (next * np + x, p))
                        .collect();
                    b.transition(w, x * na + a, row)
                        .reward(w, x * na + a, mdp.reward(s, a));
                }
            }
            if mdp.is_terminal(s) {
                b.mark_terminal(w);
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

/// `π̃(a, x | s, x⁻) = π(a | s, x) ζ(x | s, x⁻)` in joint layout.
pub fn joint_policy(model: &AmmModel) -> Vec<f64> {
    let (ns, na, nx) = (model.n_states(), model.n_actions(), model.n_intents());
    let np = nx + 1;
    let mut out = vec![0.0; ns * np * nx * na];
    for s in 0..ns {
        for slot in 0..np {
            let z = model.zeta_slot_row(s, slot);
            let base = (s * np + slot) * nx * na;
            for x in 0..nx {
                for (a, &p) in model.pi_row(s, x).iter().enumerate() {
                    out[base + x * na + a] = p * z[x];
                }
            }
        }
    }
    out
}

/// Factors a joint policy: `ζ(x | s, x⁻) = Σₐ π̃(a, x | s, x⁻)` and
/// `π(a | s, x) = Σ_{x⁻} ω(x⁻ | s) π̃(a, x | s, x⁻) / ζ(x | s, x⁻)`, where
/// `ω(· | s)` is proportional to `slot_counts[s * (|X| + 1) + slot]` and
/// uniform when row `s` has no counts.
pub fn project_joint_policy(
    joint: &[f64],
    n_states: usize,
    n_actions: usize,
    n_intents: usize,
    slot_counts: &[f64],
) -> Result<AmmModel> {
    let (ns, na, nx) = (n_states, n_actions, n_intents);
    let np = nx + 1;
    if joint.len() != ns * np * nx * na {
        return Err(Error::dim("joint policy", ns * np * nx * na, joint.len()));
    }
    if slot_counts.len() != ns * np {
        return Err(Error::dim("slot counts", ns * np, slot_counts.len()));
    }
    let mut model = AmmModel::uniform(ns, na, nx);
    for s in 0..ns {
        let counts = &slot_counts[s * np..(s + 1) * np];
        let total: f64 = counts.iter().sum();
        let omega: Vec<f64> = if total > 0.0 {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / np as f64; np]
        };
        let mut pi = vec![0.0; nx * na];
        let mut pi_weight = vec![0.0; nx];
        for (slot, &w) in omega.iter().enumerate() {
            let base = (s * np + slot) * nx * na;
            let zrow = model.zeta_slot_row_mut(s, slot);
            for x in 0..nx {
                let block = &joint[base + x * na..base + (x + 1) * na];
                let z: f64 = block.iter().sum();
                zrow[x] = z;
                if z > 0.0 && w > 0.0 {
                    for (acc, &p) in pi[x * na..(x + 1) * na].iter_mut().zip(block) {
                        *acc += w * p / z;
                    }
                    pi_weight[x] += w;
                }
            }
        }
        for x in 0..nx {
            // Renormalising covers weight lost to slots whose ζ vanished.
            if pi_weight[x] > 0.0 {
                for (dst, &v) in model
                    .pi_row_mut(s, x)
                    .iter_mut()
                    .zip(&pi[x * na..(x + 1) * na])
                {
                    *dst = v / pi_weight[x];
                }
            }
        }
    }
    Ok(model)
}

/// Joint-MDP transitions `((sᵗ, xᵗ⁻¹), (aᵗ, xᵗ), (sᵗ⁺¹, xᵗ))`.
pub fn joint_transitions(
    trajectories: &[Trajectory],
    n_actions: usize,
    n_intents: usize,
) -> Result<Vec<Transition>> {
    let np = n_intents + 1;
    let mut out = Vec::new();
    for t in trajectories {
        let x = t
            .intents
            .as_deref()
            .ok_or_else(|| Error::Invalid("trajectory is missing intents".into()))?;
        let slot = |i: usize| if i == 0 { n_intents } else { x[i - 1] };
        push_steps(
            t.len(),
            t.done,
            |i| t.states[i] * np + slot(i),
            |i| x[i] * n_actions + t.actions[i],
            &mut out,
        );
    }
    Ok(out)
}

struct JointBackend {
    n_states: usize,
    n_actions: usize,
    n_intents: usize,
    learner: SoftQLearner,
    slot_counts: Vec<f64>,
}

impl JointBackend {
    fn joint_policy(&self) -> Result<Vec<f64>> {
        self.learner.extract_policy()
    }
}

impl Backend for JointBackend {
    fn model(&self) -> Result<AmmModel> {
        project_joint_policy(
            &self.joint_policy()?,
            self.n_states,
            self.n_actions,
            self.n_intents,
            &self.slot_counts,
        )
    }

    fn set_expert(&mut self, augmented: &DemoSet) -> Result<()> {
        let transitions =
            joint_transitions(&augmented.trajectories, self.n_actions, self.n_intents)?;
        if transitions.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let np = self.n_intents + 1;
        self.slot_counts.fill(0.0);
        for t in &augmented.trajectories {
            if let Some(x) = &t.intents {
                for (i, &s) in t.states.iter().enumerate() {
                    let slot = if i == 0 { self.n_intents } else { x[i - 1] };
                    self.slot_counts[s * np + slot] += 1.0;
                }
            }
        }
        self.learner.set_expert(&transitions)
    }

    fn add_policy(&mut self, rollouts: &[Trajectory]) -> Result<()> {
        self.learner.add_policy(&joint_transitions(
            rollouts,
            self.n_actions,
            self.n_intents,
        )?)
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        Ok((self.learner.update(rng)?, f64::NAN))
    }

    /// Samples `(a, x)` jointly from the unprojected softmax policy.
    fn rollouts(&self, mdp: &FiniteMdp, seeds: &[u64], exec: Execution) -> Result<Vec<Trajectory>> {
        let joint = self.joint_policy()?;
        let (na, nx) = (self.n_actions, self.n_intents);
        let np = nx + 1;
        let width = na * nx;
        Ok(exec.map_slice(seeds, |&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let horizon = mdp.horizon().max(1);
            let (mut states, mut actions, mut intents) = (Vec::new(), Vec::new(), Vec::new());
            let mut reward = 0.0;
            let mut done = false;
            let mut s = sample_categorical(mdp.mu0(), &mut rng);
            let mut slot = nx;
            for _ in 0..horizon {
                let w = s * np + slot;
                let c = sample_categorical(&joint[w * width..(w + 1) * width], &mut rng);
                let (x, a) = (c / na, c % na);
                states.push(s);
                actions.push(a);
                intents.push(x);
                reward += mdp.reward(s, a);
                let next = sample_sparse(mdp.successors(s, a), &mut rng);
                if mdp.is_terminal(next) && !mdp.is_terminal(s) {
                    done = true;
                    break;
                }
                s = next;
                slot = x;
            }
            Trajectory {
                states,
                actions,
                intents: Some(intents),
                reward,
                done,
            }
        }))
    }
}

/// Joint-variant counterpart of [`crate::factored::train_idil`]; uses `config.pi`
/// for its single learner.
pub fn train_oiql(
    mdp: &FiniteMdp,
    demos: &DemoSet,
    config: &IdilConfig,
) -> Result<(AmmModel, TrainingLog)> {
    train_oiql_probed(mdp, demos, config, None)
}

pub fn train_oiql_probed(
    mdp: &FiniteMdp,
    demos: &DemoSet,
    config: &IdilConfig,
    probe: Option<&AccuracyProbe>,
) -> Result<(AmmModel, TrainingLog)> {
    config.validate()?;
    check_demos(mdp, demos, config.n_intents)?;
    let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), config.n_intents);
    let mut backend = JointBackend {
        n_states: ns,
        n_actions: na,
        n_intents: nx,
        learner: SoftQLearner::new(
            ns * (nx + 1),
            na * nx,
            mdp.gamma(),
            config.pi.clone(),
            derive_seed(config.seed, 4),
        )?,
        slot_counts: vec![0.0; ns * (nx + 1)],
    };
    run_em(mdp, demos, config, &mut backend, probe)
}
