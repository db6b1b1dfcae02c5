//! Day-to-day traffic evolution for strategic commuters, modelled as a
//! finite-horizon, finite-state mean field game with entropy-penalized
//! switching costs.
//!
//! The crate is organised around the two maps that define an equilibrium:
//!
//! * the backward map, [`backward_induction`], which turns a mean field
//!   sequence into the unique optimal (softmax) policy sequence and its value
//!   functions, and
//! * the forward map, [`forward_propagate`], which pushes an initial
//!   distribution through a policy sequence.
//!
//! A mean field equilibrium (MFE) is a fixed point of their composition and is
//! computed by [`fictitious_play`]. Stationary equilibria are handled by the
//! [`stationary`] module, and the two concrete travel-choice scenarios live in
//! [`route`] and [`bottleneck`].

pub mod bottleneck;
pub mod dynamics;
mod error;
pub mod fictitious;
pub mod math;
pub mod metric;
pub mod model;
pub mod route;
pub mod stationary;
mod types;

pub use dynamics::{
    backward_induction, bellman_apply, concavity_check, forward_propagate, forward_step,
    policy_evaluate, total_cost,
};
pub use error::{Error, Result};
pub use fictitious::{
    exploitability, fictitious_play, fp_average_mf, fp_average_policy, FpConfig, SolverReport,
};
pub use metric::{dist_distance, policy_distance, seq_distance};
pub use model::{ClosureModel, CostModel};
pub use types::{Distribution, MeanFieldSeq, Policy, PolicySeq, ValueSeq, SIMPLEX_TOL};
