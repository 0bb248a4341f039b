//! Centralized leader-follower formation control of quadrotors with
//! nonlinear MPC, using only relative range/bearing sensing expressed in
//! per-horizon local frames and a budgeted real-time-iteration solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod math;
pub mod ocp;
pub mod scenario;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};
