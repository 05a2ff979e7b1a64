//! Box-moving gridworld: carry each box to the truck, one at a time.
//!
//! Only box-status vectors with at most one box carried are enumerated. State
//! id is `status_index * side² + row * side + col`; statuses are listed in
//! lexicographic order of the per-box codes `0 = at origin, 1 = carried,
//! 2 = delivered`. Every step costs `step_penalty`; the all-delivered states
//! are absorbing terminals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AmmModel, FiniteMdp, MdpBuilder};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const PICKUP: usize = 4;
pub const DROP: usize = 5;
pub const N_ACTIONS: usize = 6;

pub const AT_ORIGIN: u8 = 0;
pub const CARRIED: u8 = 1;
pub const DELIVERED: u8 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneMoverSpec {
    pub grid_side: usize,
    pub box_cells: Vec<(usize, usize)>,
    pub truck_cell: (usize, usize),
    pub start_cell: (usize, usize),
    pub step_penalty: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for OneMoverSpec {
    fn default() -> Self {
        OneMoverSpec {
            grid_side: 7,
            box_cells: vec![(0, 6), (6, 0), (6, 6)],
            truck_cell: (3, 3),
            start_cell: (0, 0),
            step_penalty: 1.0,
            horizon: 200,
            gamma: 0.99,
        }
    }
}

impl OneMoverSpec {
    pub fn n_boxes(&self) -> usize {
        self.box_cells.len()
    }

    /// Boxes plus the truck.
    pub fn n_intents(&self) -> usize {
        self.n_boxes() + 1
    }

    pub fn truck_intent(&self) -> usize {
        self.n_boxes()
    }

    pub fn n_cells(&self) -> usize {
        self.grid_side * self.grid_side
    }

    /// Valid status vectors in id order.
    pub fn statuses(&self) -> Vec<Vec<u8>> {
        let n = self.n_boxes();
        let mut out = Vec::new();
        let mut code = vec![0u8; n];
        for _ in 0..3usize.pow(n as u32) {
            if code.iter().filter(|&&c| c == CARRIED).count() <= 1 {
                out.push(code.clone());
            }
            for k in (0..n).rev() {
                code[k] += 1;
                if code[k] < 3 {
                    break;
                }
                code[k] = 0;
            }
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.statuses().len() * self.n_cells()
    }

    pub fn validate(&self) -> Result<()> {
        let in_grid = |(r, c): (usize, usize)| r < self.grid_side && c < self.grid_side;
        if self.box_cells.is_empty() {
            return Err(Error::Invalid("need at least one box".into()));
        }
        let mut special = self.box_cells.clone();
        special.push(self.truck_cell);
        for (i, &cell) in special.iter().enumerate() {
            if !in_grid(cell) {
                return Err(Error::Invalid(format!("cell {cell:?} is outside the grid")));
            }
            if special[..i].contains(&cell) {
                return Err(Error::Invalid(format!(
                    "box/truck cells collide at {cell:?}"
                )));
            }
        }
        if !in_grid(self.start_cell) {
            return Err(Error::Invalid("start cell is outside the grid".into()));
        }
        Ok(())
    }

    fn move_cell(&self, (row, col): (usize, usize), action: usize) -> (usize, usize) {
        match action {
            UP if row > 0 => (row - 1, col),
            DOWN if row + 1 < self.grid_side => (row + 1, col),
            LEFT if col > 0 => (row, col - 1),
            RIGHT if col + 1 < self.grid_side => (row, col + 1),
            _ => (row, col),
        }
    }
}

/// Bidirectional state codec for a [`OneMoverSpec`].
#[derive(Clone, Debug)]
pub struct OneMoverCodec {
    spec: OneMoverSpec,
    statuses: Vec<Vec<u8>>,
}

impl OneMoverCodec {
    pub fn new(spec: &OneMoverSpec) -> Result<Self> {
        spec.validate()?;
        Ok(OneMoverCodec {
            spec: spec.clone(),
            statuses: spec.statuses(),
        })
    }

    pub fn spec(&self) -> &OneMoverSpec {
        &self.spec
    }

    pub fn n_states(&self) -> usize {
        self.statuses.len() * self.spec.n_cells()
    }

    pub fn encode(&self, cell: (usize, usize), status: &[u8]) -> Result<usize> {
        let idx = self
            .statuses
            .iter()
            .position(|s| s == status)
            .ok_or_else(|| Error::Invalid(format!("invalid box status {status:?}")))?;
        Ok(idx * self.spec.n_cells() + cell.0 * self.spec.grid_side + cell.1)
    }

    pub fn decode(&self, s: usize) -> ((usize, usize), &[u8]) {
        let n_cells = self.spec.n_cells();
        let cell = s % n_cells;
        (
            (cell / self.spec.grid_side, cell % self.spec.grid_side),
            &self.statuses[s / n_cells],
        )
    }

    pub fn carried(&self, s: usize) -> Option<usize> {
        self.decode(s).1.iter().position(|&c| c == CARRIED)
    }

    pub fn is_done(&self, s: usize) -> bool {
        self.decode(s).1.iter().all(|&c| c == DELIVERED)
    }

    /// Deterministic successor of `(s, a)`.
    pub fn step(&self, s: usize, a: usize) -> usize {
        let (cell, status) = self.decode(s);
        let mut status = status.to_vec();
        let mut cell = cell;
        match a {
            PICKUP => {
                let carrying = status.contains(&CARRIED);
                if let Some(k) = self.spec.box_cells.iter().position(|&c| c == cell) {
                    if !carrying && status[k] == AT_ORIGIN {
                        status[k] = CARRIED;
                    }
                }
            }
            DROP => {
                if cell == self.spec.truck_cell {
                    if let Some(k) = status.iter().position(|&c| c == CARRIED) {
                        status[k] = DELIVERED;
                    }
                }
            }
            _ => cell = self.spec.move_cell(cell, a),
        }
        // Only valid statuses are produced above.
        self.encode(cell, &status).expect("valid status")
    }

    pub fn build(&self) -> Result<FiniteMdp> {
        let ns = self.n_states();
        let mut b = MdpBuilder::new(ns, N_ACTIONS, self.spec.gamma, self.spec.horizon);
        for s in 0..ns {
            if self.is_done(s) {
                b.terminal(s);
                continue;
            }
            for a in 0..N_ACTIONS {
                b.transition(s, a, vec![(self.step(s, a), 1.0)]).reward(
                    s,
                    a,
                    -self.spec.step_penalty,
                );
            }
        }
        let mut mu0 = vec![0.0; ns];
        mu0[self.encode(self.spec.start_cell, &vec![AT_ORIGIN; self.spec.n_boxes()])?] = 1.0;
        b.initial(mu0);
        b.build()
    }

    fn greedy_move(&self, (row, col): (usize, usize), (tr, tc): (usize, usize)) -> Option<usize> {
        if tr < row {
            Some(UP)
        } else if tr > row {
            Some(DOWN)
        } else if tc < col {
            Some(LEFT)
        } else if tc > col {
            Some(RIGHT)
        } else {
            None
        }
    }

    /// Scripted expert: pick an undelivered box uniformly, fetch it, carry it
    /// to the truck, repeat. `ε` is spread over the non-greedy actions.
    pub fn expert(&self, epsilon: f64) -> Result<AmmModel> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::Invalid(format!("epsilon {epsilon} outside [0, 1)")));
        }
        let ns = self.n_states();
        let nx = self.spec.n_intents();
        let truck = self.spec.truck_intent();
        let mut model = AmmModel::uniform(ns, N_ACTIONS, nx);
        for s in 0..ns {
            let (cell, status) = self.decode(s);
            let carrying = status.contains(&CARRIED);
            let waiting: Vec<usize> = (0..self.spec.n_boxes())
                .filter(|&k| status[k] == AT_ORIGIN)
                .collect();
            for slot in 0..=nx {
                let zrow = model.zeta_slot_row_mut(s, slot);
                if carrying {
                    zrow.fill(0.0);
                    zrow[truck] = 1.0;
                } else if slot < truck && status[slot] == AT_ORIGIN {
                    zrow.fill(0.0);
                    zrow[slot] = 1.0;
                } else if !waiting.is_empty() {
                    zrow.fill(0.0);
                    for &k in &waiting {
                        zrow[k] = 1.0 / waiting.len() as f64;
                    }
                }
            }
            for x in 0..nx {
                let target = if x == truck {
                    self.spec.truck_cell
                } else {
                    self.spec.box_cells[x]
                };
                let chosen = match self.greedy_move(cell, target) {
                    Some(a) => a,
                    None if x == truck => DROP,
                    None => PICKUP,
                };
                let prow = model.pi_row_mut(s, x);
                prow.fill(epsilon / (N_ACTIONS - 1) as f64);
                prow[chosen] = 1.0 - epsilon;
            }
        }
        Ok(model)
    }
}
