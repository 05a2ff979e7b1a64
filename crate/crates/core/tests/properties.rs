mod common;

use common::{enumerate_map, path_log_prob};
use idil::dataset::{read_demos, write_demos, DemoHeader};
use idil::factored::{build_intent_informed_mdp, build_intent_transition_mdp};
use idil::inference::{augment_demos, viterbi_decode, viterbi_log_space};
use idil::math::entropy;
use idil::mdp::{rollout, softmax_policy_from_q};
use idil::metrics::{aligned_accuracy, Alignment};
use idil::occupancy::{exact_occupancy, f_divergence, Axis, DivergenceKind};
use idil::oiql::{build_joint_mdp, joint_policy, project_joint_policy};
use idil::soft_q::{SoftQConfig, SoftQLearner};
use idil::{AmmModel, DemoSet, FiniteMdp, Trajectory};
use proptest::prelude::*;
use rand::Rng;

fn instance(seed: u64) -> common::Instance {
    common::random_instance(5, 3, 3, &mut common::rng(seed))
}

/// A random trajectory over the model's ids (not necessarily feasible).
fn random_traj(model: &AmmModel, len: usize, seed: u64) -> Trajectory {
    let mut r = common::rng(seed);
    Trajectory {
        states: (0..len).map(|_| r.gen_range(0..model.n_states())).collect(),
        actions: (0..len)
            .map(|_| r.gen_range(0..model.n_actions()))
            .collect(),
        intents: None,
        reward: 0.0,
        done: false,
    }
}

/// Log scores agree, counting two impossible paths as equal.
fn same_score(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() < 1e-9
}

fn stochastic_rows(mdp: &FiniteMdp) -> bool {
    (0..mdp.n_states()).all(|s| {
        (0..mdp.n_actions())
            .all(|a| (mdp.successors(s, a).iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-9)
    })
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
        let t: f64 = v.iter().sum();
        if t == 0.0 {
            vec![1.0 / v.len() as f64; v.len()]
        } else {
            v.into_iter().map(|x| x / t).collect()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn viterbi_dominates_every_path(seed in any::<u64>(), len in 1usize..6, path_seed in any::<u64>()) {
        let inst = instance(seed);
        let traj = random_traj(&inst.model, len, seed ^ 1);
        let best = viterbi_decode(&traj, &inst.model).unwrap();
        let mut r = common::rng(path_seed);
        let other: Vec<usize> = (0..len).map(|_| r.gen_range(0..inst.model.n_intents())).collect();
        prop_assert!(best.log_prob >= path_log_prob(&traj, &inst.model, &other));
        prop_assert_eq!(best.log_prob, enumerate_map(&traj, &inst.model).1);
    }

    #[test]
    fn decoding_ignores_pi_row_rescaling(seed in any::<u64>(), len in 1usize..8, scale in 0.1f64..10.0) {
        let inst = instance(seed);
        let m = &inst.model;
        let mut pi = m.pi().to_vec();
        for (k, row) in pi.chunks_mut(m.n_actions()).enumerate() {
            let c = scale * (1.0 + k as f64);
            row.iter_mut().for_each(|p| *p *= c);
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= t);
        }
        let rescaled = AmmModel::from_tables(m.n_states(), m.n_actions(), m.n_intents(), m.zeta().to_vec(), pi).unwrap();
        let traj = random_traj(m, len, seed ^ 2);
        // equal-probability paths may break ties differently after rounding
        let best = viterbi_decode(&traj, m).unwrap().log_prob;
        let other = viterbi_decode(&traj, &rescaled).unwrap().intents;
        prop_assert!(same_score(path_log_prob(&traj, m, &other), best));
    }

    #[test]
    fn decoding_ignores_per_step_log_shifts(seed in any::<u64>(), len in 1usize..8, shift in -50.0f64..50.0) {
        let inst = instance(seed);
        let m = &inst.model;
        let traj = random_traj(m, len, seed ^ 3);
        let (s, a) = (&traj.states, &traj.actions);
        let plain = viterbi_decode(&traj, m).unwrap();
        let shifted = viterbi_log_space(
            len,
            m.n_intents(),
            |x| m.zeta_row(s[0], None)[x].ln(),
            |t, xp, x| m.zeta_slot_row(s[t], xp)[x].ln(),
            |t, x| m.pi_row(s[t], x)[a[t]].ln() + shift * (t as f64 + 1.0),
        );
        prop_assert!(same_score(path_log_prob(&traj, m, &shifted.intents), plain.log_prob));
    }

    #[test]
    fn softmax_is_stochastic_and_shift_invariant(
        q in prop::collection::vec(-20.0f64..20.0, 1..8),
        c in -100.0f64..100.0,
        temp in 0.01f64..5.0,
    ) {
        let n = q.len();
        let p = softmax_policy_from_q(&q, n, temp).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let ps = softmax_policy_from_q(&shifted, n, temp).unwrap();
        for (a, b) in p.iter().zip(&ps) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn extracted_policy_ignores_row_shifts(seed in any::<u64>(), shifts in prop::collection::vec(-5.0f64..5.0, 3)) {
        let cfg = SoftQConfig { init_scale: 3.0, ..SoftQConfig::default() };
        let mut learner = SoftQLearner::new(3, 4, 0.9, cfg, seed).unwrap();
        let before = learner.extract_policy().unwrap();
        learner.shift_q(|s, _| shifts[s]);
        let after = learner.extract_policy().unwrap();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_temperature_raises_entropy(q in prop::collection::vec(-3.0f64..3.0, 2..6), t in 0.05f64..2.0) {
        prop_assume!(q.iter().any(|&v| (v - q[0]).abs() > 1e-3));
        let n = q.len();
        let cold = softmax_policy_from_q(&q, n, t).unwrap();
        let hot = softmax_policy_from_q(&q, n, 2.0 * t).unwrap();
        prop_assert!(entropy(&hot) > entropy(&cold));
    }

    #[test]
    fn best_permutation_is_at_least_identity(
        nx in 1usize..4,
        seqs in prop::collection::vec((prop::collection::vec(0usize..3, 1..10), any::<u64>()), 1..6),
    ) {
        let truth: Vec<Vec<usize>> = seqs.iter().map(|(t, _)| t.iter().map(|v| v % nx).collect()).collect();
        let predicted: Vec<Vec<usize>> = seqs
            .iter()
            .zip(&truth)
            .map(|((_, seed), t)| {
                let mut r = common::rng(*seed);
                t.iter().map(|_| r.gen_range(0..nx)).collect()
            })
            .collect();
        let id = aligned_accuracy(&predicted, &truth, nx, Alignment::Identity).unwrap();
        let best = aligned_accuracy(&predicted, &truth, nx, Alignment::BestPermutation).unwrap();
        prop_assert!(best >= id);
        prop_assert!((0.0..=1.0).contains(&best));
    }

    #[test]
    fn divergences_are_nonnegative(p in distribution(6), q in distribution(6)) {
        for kind in [DivergenceKind::Chi2, DivergenceKind::TotalVariation, DivergenceKind::Kl] {
            let d = f_divergence(&p, &q, kind).unwrap();
            prop_assert!(d >= -1e-12, "{kind:?}: {d}");
            prop_assert!(f_divergence(&p, &p, kind).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn marginalization_is_associative(seed in any::<u64>()) {
        let inst = instance(seed);
        let joint = exact_occupancy(&inst.mdp, &inst.model, 1e-10).unwrap();
        let two_step = joint
            .marginalize(&[Axis::State, Axis::Intent, Axis::Action])
            .unwrap()
            .marginalize(&[Axis::Action, Axis::State])
            .unwrap();
        let one_shot = joint.marginalize(&[Axis::Action, Axis::State]).unwrap();
        prop_assert_eq!(&two_step.dims, &one_shot.dims);
        for (a, b) in two_step.data.iter().zip(&one_shot.data) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // ζ-step marginal equals Σₐ of the joint
        let spx = joint.marginalize(&[Axis::State, Axis::PrevIntent, Axis::Intent]).unwrap();
        let total: f64 = spx.data.iter().sum();
        prop_assert!((total - joint.total()).abs() < 1e-12);
    }

    #[test]
    fn augmentation_keeps_labels_and_is_idempotent(seed in any::<u64>(), n_labeled in 0usize..4) {
        let inst = instance(seed);
        let trajs: Vec<Trajectory> = (0..4).map(|i| rollout(&inst.mdp, &inst.model, seed ^ i).unwrap()).collect();
        let demos = DemoSet::new(trajs.clone(), 4).unwrap().with_labels(n_labeled).unwrap();
        let once = augment_demos(&demos, &inst.model).unwrap();
        for (got, want) in once.trajectories.iter().zip(&trajs).take(n_labeled) {
            prop_assert_eq!(&got.intents, &want.intents);
        }
        prop_assert!(once.trajectories.iter().all(|t| t.intents.is_some()));
        let twice = augment_demos(&demos, &inst.model).unwrap();
        prop_assert_eq!(once.trajectories, twice.trajectories);
    }

    #[test]
    fn rollouts_stay_in_range_and_follow_the_dynamics(seed in any::<u64>()) {
        let inst = instance(seed);
        let t = rollout(&inst.mdp, &inst.model, seed).unwrap();
        prop_assert!(t.validate(&inst.mdp, inst.model.n_intents()).is_ok());
        for i in 1..t.len() {
            prop_assert!(inst.mdp.transition_prob(t.states[i - 1], t.actions[i - 1], t.states[i]) > 0.0);
        }
    }

    #[test]
    fn demo_files_round_trip(seed in any::<u64>(), n_labeled in 0usize..3) {
        let inst = instance(seed);
        let trajs: Vec<Trajectory> = (0..3).map(|i| rollout(&inst.mdp, &inst.model, seed ^ i).unwrap()).collect();
        let demos = DemoSet::new(trajs, 3).unwrap().with_labels(n_labeled).unwrap();
        let header = DemoHeader { n_labeled, env: "random".into(), seed };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.jsonl");
        write_demos(&path, &header, &demos).unwrap();
        let (h, back) = read_demos(&path).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back, demos);
    }

    #[test]
    fn projecting_a_factored_joint_policy_is_exact(seed in any::<u64>(), counts in prop::collection::vec(0.1f64..5.0, 24)) {
        let m = instance(seed).model;
        let (ns, na, nx) = (m.n_states(), m.n_actions(), m.n_intents());
        let back = project_joint_policy(&joint_policy(&m), ns, na, nx, &counts[..ns * (nx + 1)]).unwrap();
        for (a, b) in back.zeta().iter().zip(m.zeta()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for s in 0..ns {
            for x in 0..nx {
                // π rows are only recoverable where some slot gives x positive weight
                if (0..=nx).any(|slot| m.zeta_slot_row(s, slot)[x] > 0.0) {
                    for (a, b) in back.pi_row(s, x).iter().zip(m.pi_row(s, x)) {
                        prop_assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn augmented_mdps_are_stochastic(seed in any::<u64>()) {
        let inst = instance(seed);
        prop_assert!(stochastic_rows(&build_intent_informed_mdp(&inst.mdp, &inst.model).unwrap()));
        prop_assert!(stochastic_rows(&build_intent_transition_mdp(&inst.mdp, &inst.model).unwrap()));
        prop_assert!(stochastic_rows(&build_joint_mdp(&inst.mdp, inst.model.n_intents()).unwrap()));
    }
}
