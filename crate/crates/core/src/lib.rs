//! Intent-driven imitation learning for finite MDPs.
//!
//! An expert is modelled as an Agent Markov Model: a latent intent `x`
//! evolves through `ζ(x | s, x⁻)` and selects actions through `π(a | s, x)`.
//! [`train_idil`] learns both tables from demonstrations whose intents
//! are partly or wholly missing, alternating Viterbi decoding with two
//! inverse soft-Q imitation problems. [`oiql::train_oiql`] solves the same
//! problem with one joint learner, and [`baselines`] ignores intents.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod exec;
pub mod factored;
pub mod inference;
pub mod math;
pub mod mdp;
pub mod metrics;
pub mod occupancy;
pub mod oiql;
pub mod oracle;
pub mod soft_q;
pub mod suite;
pub mod training;

pub use error::{Error, Result};
pub use exec::Execution;
pub use factored::{train_idil, train_idil_probed};
pub use mdp::{AmmModel, DemoSet, FiniteMdp, MdpBuilder, StationaryPolicy, Trajectory};
pub use training::{IdilConfig, TrainingLog};
