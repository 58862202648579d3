//! Monte Carlo construction and verification of correlated Nash equilibria
//! in two-player differential games, built from a stochastic guide process
//! and an extremal-shift tracking strategy.

// `!(a > b)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod equilibrium;
pub mod error;
pub mod game;
pub mod guide;
pub mod lattice;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod shift;
pub mod stats;
pub mod value;
pub mod zero_sum;

pub use error::{Error, Result};
pub use game::{Control, ControlGrid, GameSpec, Modulus, Payoff, PlayerDynamics, State, Trajectory};
pub use stats::Estimate;
