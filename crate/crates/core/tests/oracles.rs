//! Environment and occupancy checks against brute-force or statistical oracles.

mod common;

use std::collections::VecDeque;

use common::rng;
use idil::envs::onemover::{OneMoverCodec, OneMoverSpec, N_ACTIONS as OM_ACTIONS};
use idil::envs::MultiGoalsSpec;
use idil::math::{sample_categorical, sample_sparse};
use idil::metrics::{episodic_reward, permutations};
use idil::occupancy::{exact_occupancy, Axis};
use idil::{AmmModel, Execution, FiniteMdp, MdpBuilder};

/// 3-state chain (left, stay, right moves with slip) and a 2-intent model
/// that prefers drifting one way per intent.
fn chain() -> (FiniteMdp, AmmModel) {
    let mut b = MdpBuilder::new(3, 2, 0.7, 80);
    for s in 0..3usize {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(2);
        b.transition(
            s,
            0,
            if left == s {
                vec![(s, 1.0)]
            } else {
                vec![(left, 0.8), (s, 0.2)]
            },
        );
        b.transition(
            s,
            1,
            if right == s {
                vec![(s, 1.0)]
            } else {
                vec![(right, 0.8), (s, 0.2)]
            },
        );
    }
    b.initial(vec![0.2, 0.5, 0.3]);
    let mdp = b.build().unwrap();
    #[rustfmt::skip]
    let zeta = vec![
        0.8, 0.2, 0.3, 0.7, 0.5, 0.5,
        0.9, 0.1, 0.1, 0.9, 0.4, 0.6,
        0.6, 0.4, 0.25, 0.75, 0.7, 0.3,
    ];
    let pi = vec![0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7, 0.75, 0.25, 0.1, 0.9];
    (mdp, AmmModel::from_tables(3, 2, 2, zeta, pi).unwrap())
}

#[test]
fn exact_occupancy_agrees_with_monte_carlo() {
    let (mdp, model) = chain();
    let joint = exact_occupancy(&mdp, &model, 1e-12).unwrap();
    let (na, nx) = (2, 2);
    let cells = joint.rho.len();
    let gamma = mdp.gamma();
    let episodes = 1_000_000;
    let mut sum = vec![0.0; cells];
    let mut sum_sq = vec![0.0; cells];
    let mut per_episode = vec![0.0; cells];
    let mut r = rng(3);
    for _ in 0..episodes {
        per_episode.fill(0.0);
        let mut s = sample_categorical(mdp.mu0(), &mut r);
        let mut slot = nx;
        let mut w = 1.0 - gamma;
        for _ in 0..mdp.horizon() {
            let x = sample_categorical(model.zeta_slot_row(s, slot), &mut r);
            let a = sample_categorical(model.pi_row(s, x), &mut r);
            per_episode[((s * na + a) * nx + x) * (nx + 1) + slot] += w;
            s = sample_sparse(mdp.successors(s, a), &mut r);
            slot = x;
            w *= gamma;
        }
        for i in 0..cells {
            sum[i] += per_episode[i];
            sum_sq[i] += per_episode[i] * per_episode[i];
        }
    }
    let n = episodes as f64;
    // truncation at the horizon loses γ^80 ≈ 4e-13 of mass
    for i in 0..cells {
        let mean = sum[i] / n;
        let se = ((sum_sq[i] / n - mean * mean).max(0.0) / n).sqrt();
        let exact = joint.rho[i];
        assert!(
            (mean - exact).abs() <= 3.0 * se + 1e-9,
            "cell {i}: exact {exact:.6}, estimate {mean:.6} ± {se:.2e}"
        );
    }
}

#[test]
fn state_action_marginal_matches_intent_collapsed_chain() {
    let mut r = rng(8);
    for _ in 0..50 {
        let inst = common::random_instance(6, 3, 3, &mut r);
        let (mdp, model) = (&inst.mdp, &inst.model);
        let (ns, na, nx) = (mdp.n_states(), mdp.n_actions(), model.n_intents());
        let np = nx + 1;
        // one-action chain over (s, slot) with intents and actions summed out
        let mut b = MdpBuilder::new(ns * np, 1, mdp.gamma(), mdp.horizon());
        for s in 0..ns {
            for slot in 0..np {
                let mut row = vec![0.0; ns * np];
                for x in 0..nx {
                    let z = model.zeta_slot_row(s, slot)[x];
                    for a in 0..na {
                        for &(n, p) in mdp.successors(s, a) {
                            row[n * np + x] += z * model.pi_row(s, x)[a] * p;
                        }
                    }
                }
                let sparse = row
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, p)| p > 0.0)
                    .collect();
                b.transition(s * np + slot, 0, sparse);
            }
        }
        let mut mu0 = vec![0.0; ns * np];
        for s in 0..ns {
            mu0[s * np + nx] = mdp.mu0()[s];
        }
        b.initial(mu0);
        let collapsed = b.build().unwrap();
        let chain_occ = exact_occupancy(&collapsed, &AmmModel::uniform(ns * np, 1, 1), 1e-13)
            .unwrap()
            .marginalize(&[Axis::State])
            .unwrap()
            .data;
        let mut sa = vec![0.0; ns * na];
        for s in 0..ns {
            for slot in 0..np {
                let m = chain_occ[s * np + slot];
                for x in 0..nx {
                    for a in 0..na {
                        sa[s * na + a] +=
                            m * model.zeta_slot_row(s, slot)[x] * model.pi_row(s, x)[a];
                    }
                }
            }
        }
        let joint = exact_occupancy(mdp, model, 1e-13).unwrap();
        let lib = joint
            .marginalize(&[Axis::State, Axis::Action])
            .unwrap()
            .data;
        for (a, b) in lib.iter().zip(&sa) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Shortest and longest Manhattan tour from `start` over all landmark orders.
fn tour_range(spec: &MultiGoalsSpec, start: (usize, usize)) -> (usize, usize) {
    let (mut best, mut worst) = (usize::MAX, 0);
    for order in permutations(spec.n_landmarks()) {
        let mut at = start;
        let mut len = 0;
        for &k in &order {
            len += manhattan(at, spec.landmark_cells[k]);
            at = spec.landmark_cells[k];
        }
        best = best.min(len);
        worst = worst.max(len);
    }
    (best, worst)
}

#[test]
fn multigoals_optimal_reward_is_the_shortest_tour() {
    for n in [2, 3] {
        let spec = MultiGoalsSpec::new(n).unwrap();
        let mdp = spec.build().unwrap();
        let ns = mdp.n_states();
        // undiscounted finite-horizon optimum by backward induction
        let mut v = vec![0.0; ns];
        for _ in 0..mdp.horizon() {
            let mut next = vec![0.0; ns];
            for (s, out) in next.iter_mut().enumerate() {
                if mdp.is_terminal(s) {
                    continue;
                }
                *out = (0..mdp.n_actions())
                    .map(|a| {
                        mdp.reward(s, a)
                            + mdp
                                .successors(s, a)
                                .iter()
                                .map(|&(n, p)| p * v[n])
                                .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            v = next;
        }
        for row in 0..spec.grid_side {
            for col in 0..spec.grid_side {
                if spec.landmark_at(row, col).is_some() {
                    continue;
                }
                let (best, _) = tour_range(&spec, (row, col));
                let expected = 10.0 * n as f64 - 0.1 * best as f64;
                let s = spec.encode(row, col, 0);
                assert!(
                    (v[s] - expected).abs() < 1e-9,
                    "n={n} ({row},{col}): {} vs {expected}",
                    v[s]
                );
            }
        }
    }
}

#[test]
fn multigoals_expert_reward_sits_in_the_tour_band() {
    for n in [2, 3] {
        let spec = MultiGoalsSpec::new(n).unwrap();
        let mdp = spec.build().unwrap();
        let (mut best, mut worst) = (usize::MAX, 0);
        for row in 0..spec.grid_side {
            for col in 0..spec.grid_side {
                if spec.landmark_at(row, col).is_none() {
                    let (b, w) = tour_range(&spec, (row, col));
                    best = best.min(b);
                    worst = worst.max(w);
                }
            }
        }
        let expert = spec.expert(0.05).unwrap();
        let (mean, _) = episodic_reward(&mdp, &expert, 500, 21, Execution::default()).unwrap();
        let lo = 10.0 * n as f64 - 0.1 * worst as f64;
        let hi = 10.0 * n as f64 - 0.1 * best as f64;
        assert!(
            lo <= mean && mean <= hi,
            "n={n}: {mean} outside [{lo}, {hi}]"
        );
    }
}

/// Breadth-first shortest plan length from the start state to any delivered state.
fn onemover_bfs(codec: &OneMoverCodec, mdp: &FiniteMdp) -> usize {
    let start = mdp.mu0().iter().position(|&p| p > 0.0).unwrap();
    let mut dist = vec![usize::MAX; codec.n_states()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        if codec.is_done(s) {
            return dist[s];
        }
        for a in 0..OM_ACTIONS {
            let n = codec.step(s, a);
            if dist[n] == usize::MAX {
                dist[n] = dist[s] + 1;
                queue.push_back(n);
            }
        }
    }
    panic!("no plan delivers every box");
}

#[test]
fn onemover_expert_reward_sits_in_the_plan_band() {
    let spec = OneMoverSpec::default();
    let codec = OneMoverCodec::new(&spec).unwrap();
    let mdp = codec.build().unwrap();
    let optimal = onemover_bfs(&codec, &mdp);
    // fixed-order plans: walk to each box, pick up, walk to the truck, drop
    let mut worst_order = 0;
    for order in permutations(spec.n_boxes()) {
        let mut at = spec.start_cell;
        let mut len = 0;
        for &k in &order {
            len += manhattan(at, spec.box_cells[k])
                + 1
                + manhattan(spec.box_cells[k], spec.truck_cell)
                + 1;
            at = spec.truck_cell;
        }
        assert!(len >= optimal);
        worst_order = worst_order.max(len);
    }
    // each ε-step undoes at most one step of progress: E[len] ≤ L / (1 − 2ε)
    let eps = 0.05;
    let bound = worst_order as f64 / (1.0 - 2.0 * eps);
    let expert = codec.expert(eps).unwrap();
    let (mean, _) = episodic_reward(&mdp, &expert, 500, 4, Execution::default()).unwrap();
    assert!(
        -bound <= mean && mean <= -(optimal as f64),
        "{mean} outside [{}, {}]",
        -bound,
        -(optimal as f64)
    );
}

#[test]
fn onemover_expert_always_delivers() {
    let spec = OneMoverSpec::default();
    let codec = OneMoverCodec::new(&spec).unwrap();
    let mdp = codec.build().unwrap();
    let expert = codec.expert(0.0).unwrap();
    let (ns, nx) = (codec.n_states(), expert.n_intents());
    let np = nx + 1;
    // longest episode over every intent branch, from every (s, slot)
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done(usize),
    }
    let mut marks = vec![Mark::New; ns * np];
    fn longest(
        s: usize,
        slot: usize,
        codec: &OneMoverCodec,
        expert: &AmmModel,
        marks: &mut [Mark],
        np: usize,
    ) -> usize {
        if codec.is_done(s) {
            return 0;
        }
        match marks[s * np + slot] {
            Mark::Done(d) => return d,
            Mark::Open => panic!("intent loop at state {s}"),
            Mark::New => {}
        }
        marks[s * np + slot] = Mark::Open;
        let mut worst = 0;
        for (x, &z) in expert.zeta_slot_row(s, slot).iter().enumerate() {
            if z == 0.0 {
                continue;
            }
            let a = expert.pi_row(s, x).iter().position(|&p| p == 1.0).unwrap();
            let next = codec.step(s, a);
            worst = worst.max(1 + longest(next, x, codec, expert, marks, np));
        }
        marks[s * np + slot] = Mark::Done(worst);
        worst
    }
    let mut overall = 0;
    for s in 0..ns {
        overall = overall.max(longest(s, nx, &codec, &expert, &mut marks, np));
    }
    assert!(
        overall <= mdp.horizon(),
        "longest expert episode {overall} exceeds the horizon"
    );
}
