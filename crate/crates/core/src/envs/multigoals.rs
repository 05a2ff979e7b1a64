//! Gridworld in which the agent must visit every landmark once, in any order.
//!
//! State id is `mask * side² + row * side + col`, where bit `k` of `mask`
//! records that landmark `k` has been visited. Entering an unvisited landmark
//! sets its bit and pays `landmark_reward`; every step costs `step_penalty`.
//! States with every bit set are absorbing terminals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AmmModel, FiniteMdp, MdpBuilder};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;
pub const N_ACTIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiGoalsSpec {
    pub grid_side: usize,
    /// `(row, col)` per landmark; intent `k` targets landmark `k`.
    pub landmark_cells: Vec<(usize, usize)>,
    pub step_penalty: f64,
    pub landmark_reward: f64,
    pub horizon: usize,
    pub slip_prob: f64,
    pub gamma: f64,
}

impl MultiGoalsSpec {
    /// Default 8×8 layout with `n ∈ 2..=5` landmarks.
    pub fn new(n_landmarks: usize) -> Result<Self> {
        let landmark_cells = match n_landmarks {
            2 => vec![(1, 1), (6, 6)],
            3 => vec![(1, 1), (1, 6), (6, 3)],
            4 => vec![(1, 1), (1, 6), (6, 1), (6, 6)],
            5 => vec![(1, 1), (1, 6), (6, 1), (6, 6), (3, 4)],
            n => {
                return Err(Error::Invalid(format!(
                    "default layouts exist for 2..=5 landmarks, got {n}"
                )))
            }
        };
        Ok(MultiGoalsSpec {
            grid_side: 8,
            landmark_cells,
            step_penalty: 0.1,
            landmark_reward: 10.0,
            horizon: 100,
            slip_prob: 0.0,
            gamma: 0.99,
        })
    }

    pub fn n_landmarks(&self) -> usize {
        self.landmark_cells.len()
    }

    pub fn n_cells(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn n_states(&self) -> usize {
        self.n_cells() << self.n_landmarks()
    }

    pub fn full_mask(&self) -> usize {
        (1 << self.n_landmarks()) - 1
    }

    pub fn encode(&self, row: usize, col: usize, mask: usize) -> usize {
        mask * self.n_cells() + row * self.grid_side + col
    }

    /// `(row, col, mask)` of a state id.
    pub fn decode(&self, s: usize) -> (usize, usize, usize) {
        let cell = s % self.n_cells();
        (
            cell / self.grid_side,
            cell % self.grid_side,
            s / self.n_cells(),
        )
    }

    pub fn landmark_at(&self, row: usize, col: usize) -> Option<usize> {
        self.landmark_cells.iter().position(|&c| c == (row, col))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_landmarks();
        if n == 0 || n > 16 {
            return Err(Error::Invalid(format!("need 1..=16 landmarks, got {n}")));
        }
        if self.grid_side == 0 {
            return Err(Error::Invalid("grid side must be positive".into()));
        }
        for (k, &(r, c)) in self.landmark_cells.iter().enumerate() {
            if r >= self.grid_side || c >= self.grid_side {
                return Err(Error::Invalid(format!(
                    "landmark {k} at ({r}, {c}) is outside the grid"
                )));
            }
            if self.landmark_cells[..k].contains(&(r, c)) {
                return Err(Error::Invalid(format!(
                    "landmark {k} collides at ({r}, {c})"
                )));
            }
        }
        if self.landmark_cells.len() == self.n_cells() {
            return Err(Error::Invalid("no free start cell".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::Invalid(format!(
                "slip_prob {} outside [0, 1)",
                self.slip_prob
            )));
        }
        Ok(())
    }

    /// Cell reached by `action` from `(row, col)`; moves into the boundary stay put.
    pub fn move_cell(&self, row: usize, col: usize, action: usize) -> (usize, usize) {
        match action {
            UP if row > 0 => (row - 1, col),
            DOWN if row + 1 < self.grid_side => (row + 1, col),
            LEFT if col > 0 => (row, col - 1),
            RIGHT if col + 1 < self.grid_side => (row, col + 1),
            _ => (row, col),
        }
    }

    fn step_state(&self, row: usize, col: usize, mask: usize, action: usize) -> (usize, bool) {
        let (nr, nc) = self.move_cell(row, col, action);
        let mut new_mask = mask;
        let mut scored = false;
        if let Some(k) = self.landmark_at(nr, nc) {
            if mask & (1 << k) == 0 {
                new_mask |= 1 << k;
                scored = true;
            }
        }
        (self.encode(nr, nc, new_mask), scored)
    }

    pub fn build(&self) -> Result<FiniteMdp> {
        self.validate()?;
        let ns = self.n_states();
        let mut b = MdpBuilder::new(ns, N_ACTIONS, self.gamma, self.horizon);
        let full = self.full_mask();
        for s in 0..ns {
            let (row, col, mask) = self.decode(s);
            if mask == full {
                b.terminal(s);
                continue;
            }
            for a in 0..N_ACTIONS {
                let mut row_probs: Vec<(usize, f64)> = Vec::with_capacity(N_ACTIONS);
                let mut expected_bonus = 0.0;
                for outcome in 0..N_ACTIONS {
                    let p = if outcome == a {
                        1.0 - self.slip_prob
                    } else {
                        self.slip_prob / (N_ACTIONS - 1) as f64
                    };
                    if p == 0.0 {
                        continue;
                    }
                    let (next, scored) = self.step_state(row, col, mask, outcome);
                    if scored {
                        expected_bonus += p * self.landmark_reward;
                    }
                    match row_probs.iter_mut().find(|(n, _)| *n == next) {
                        Some(entry) => entry.1 += p,
                        None => row_probs.push((next, p)),
                    }
                }
                b.transition(s, a, row_probs)
                    .reward(s, a, expected_bonus - self.step_penalty);
            }
        }
        let mut mu0 = vec![0.0; ns];
        let free = self.n_cells() - self.n_landmarks();
        for row in 0..self.grid_side {
            for col in 0..self.grid_side {
                if self.landmark_at(row, col).is_none() {
                    mu0[self.encode(row, col, 0)] = 1.0 / free as f64;
                }
            }
        }
        b.initial(mu0);
        b.build()
    }

    /// Greedy move toward `target`: the first of up, down, left, right that
    /// shortens the Manhattan distance, or stay when already there.
    pub fn greedy_action(&self, row: usize, col: usize, target: (usize, usize)) -> usize {
        let (tr, tc) = target;
        if tr < row {
            UP
        } else if tr > row {
            DOWN
        } else if tc < col {
            LEFT
        } else if tc > col {
            RIGHT
        } else {
            STAY
        }
    }

    /// Hand-crafted expert: pick a uniformly random unvisited landmark, walk to
    /// it greedily (`1 − ε` on the greedy action), repeat.
    pub fn expert(&self, epsilon: f64) -> Result<AmmModel> {
        self.validate()?;
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::Invalid(format!("epsilon {epsilon} outside [0, 1)")));
        }
        let ns = self.n_states();
        let nx = self.n_landmarks();
        let mut model = AmmModel::uniform(ns, N_ACTIONS, nx);
        for s in 0..ns {
            let (row, col, mask) = self.decode(s);
            let unvisited: Vec<usize> = (0..nx).filter(|k| mask & (1 << k) == 0).collect();
            for slot in 0..=nx {
                let keep = slot < nx && mask & (1 << slot) == 0;
                let zrow = model.zeta_slot_row_mut(s, slot);
                if keep {
                    zrow.fill(0.0);
                    zrow[slot] = 1.0;
                } else if !unvisited.is_empty() {
                    zrow.fill(0.0);
                    for &k in &unvisited {
                        zrow[k] = 1.0 / unvisited.len() as f64;
                    }
                }
            }
            for x in 0..nx {
                let greedy = self.greedy_action(row, col, self.landmark_cells[x]);
                let prow = model.pi_row_mut(s, x);
                prow.fill(epsilon / (N_ACTIONS - 1) as f64);
                prow[greedy] = 1.0 - epsilon;
            }
        }
        Ok(model)
    }
}
