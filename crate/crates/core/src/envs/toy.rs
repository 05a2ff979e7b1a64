//! Five-state ring with two sticky intents, small enough for exact analysis.
//!
//! Action 0 steps clockwise, action 1 counter-clockwise; a step succeeds with
//! `success_prob` and otherwise leaves the agent in place. Intent 0 favours
//! clockwise motion and intent 1 the reverse. Reward is zero throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AmmModel, FiniteMdp, MdpBuilder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n_states: usize,
    pub success_prob: f64,
    /// Probability that ζ keeps the current intent.
    pub stickiness: f64,
    /// Probability of the preferred action.
    pub preference: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_states: 5,
            success_prob: 0.9,
            stickiness: 0.9,
            preference: 0.85,
            horizon: 40,
            gamma: 0.9,
        }
    }
}

impl ToySpec {
    pub const N_ACTIONS: usize = 2;
    pub const N_INTENTS: usize = 2;

    fn check_prob(name: &str, p: f64) -> Result<()> {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("{name} {p} outside [0, 1]")))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(Error::Invalid("ring needs at least two states".into()));
        }
        Self::check_prob("success_prob", self.success_prob)?;
        Self::check_prob("stickiness", self.stickiness)?;
        Self::check_prob("preference", self.preference)
    }

    pub fn build(&self) -> Result<FiniteMdp> {
        self.validate()?;
        let n = self.n_states;
        let mut b = MdpBuilder::new(n, Self::N_ACTIONS, self.gamma, self.horizon);
        for s in 0..n {
            let cw = (s + 1) % n;
            let ccw = (s + n - 1) % n;
            for (a, next) in [(0, cw), (1, ccw)] {
                b.transition(
                    s,
                    a,
                    vec![(next, self.success_prob), (s, 1.0 - self.success_prob)],
                );
            }
        }
        let mut mu0 = vec![0.0; n];
        mu0[0] = 1.0;
        b.initial(mu0);
        b.build()
    }

    /// Ground-truth model; the initial intent is uniform.
    pub fn expert(&self) -> Result<AmmModel> {
        self.validate()?;
        let n = self.n_states;
        let mut m = AmmModel::uniform(n, Self::N_ACTIONS, Self::N_INTENTS);
        for s in 0..n {
            for prev in 0..Self::N_INTENTS {
                let row = m.zeta_slot_row_mut(s, prev);
                row[prev] = self.stickiness;
                row[1 - prev] = 1.0 - self.stickiness;
            }
            for x in 0..Self::N_INTENTS {
                let row = m.pi_row_mut(s, x);
                row[x] = self.preference;
                row[1 - x] = 1.0 - self.preference;
            }
        }
        Ok(m)
    }
}
