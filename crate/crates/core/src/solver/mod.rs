//! Gauss-Newton real-time iteration over a multiple-shooting NLP.
//!
//! The solver only sees the [`OptimalControlProblem`] trait: a discrete
//! dynamics map with sensitivities, least-squares stage and terminal
//! residuals with Jacobians, and box bounds on the inputs. Each SQP step
//! linearizes at the current guess, condenses the states away, solves the
//! dense box-constrained QP with a primal active-set method and takes the
//! full step.

mod condense;
mod kkt;
mod qp;
mod rti;
mod sqp;

pub use condense::{condense, linearize, Linearization, QpSubproblem};
pub use kkt::{kkt_tolerance, objective};
pub use qp::{qp_solve, qp_solve_warm, BoundState, QpSolution};
pub use rti::{rti_control_step, shift_and_transform, Budget, ControlOutcome, PredictedMotion, RtiOptions};
pub use sqp::{sqp_step, SolverStatus, SqpOptions, SqpStep};

use crate::error::Result;
use nalgebra::{DMatrix, DVector};

/// Discrete-time successor and its sensitivities.
#[derive(Debug, Clone)]
pub struct StepSensitivity {
    pub next: DVector<f64>,
    pub wrt_state: DMatrix<f64>,
    pub wrt_input: DMatrix<f64>,
}

/// Weighted least-squares residual block; the stage cost is `0.5 * |r|^2`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub value: DVector<f64>,
    pub wrt_state: DMatrix<f64>,
    /// Zero columns for the terminal residual.
    pub wrt_input: DMatrix<f64>,
}

pub trait OptimalControlProblem {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_state(&self) -> &DVector<f64>;
    fn step(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<StepSensitivity>;
    fn stage_residual(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<Residual>;
    fn terminal_residual(&self, x: &DVector<f64>) -> Result<Residual>;
    /// Lower and upper input bounds, identical at every stage.
    fn input_bounds(&self) -> (DVector<f64>, DVector<f64>);

    /// `a - b`, with any angular components wrapped.
    fn state_difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        a - b
    }
}

/// Multiple-shooting primal iterate: `N + 1` states and `N` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Constant states and inputs over the horizon.
    pub fn constant(x: &DVector<f64>, u: &DVector<f64>, horizon: usize) -> Self {
        Self { states: vec![x.clone(); horizon + 1], inputs: vec![u.clone(); horizon] }
    }

    /// Forward simulation of `inputs` from the problem's initial state.
    pub fn rollout<P: OptimalControlProblem + ?Sized>(problem: &P, inputs: Vec<DVector<f64>>) -> Result<Self> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(problem.initial_state().clone());
        for (k, u) in inputs.iter().enumerate() {
            let next = problem.step(k, &states[k], u)?.next;
            states.push(next);
        }
        Ok(Self { states, inputs })
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn check_dims<P: OptimalControlProblem + ?Sized>(&self, problem: &P) -> Result<()> {
        let n = problem.horizon();
        let ok = self.inputs.len() == n
            && self.states.len() == n + 1
            && self.states.iter().all(|x| x.len() == problem.state_dim())
            && self.inputs.iter().all(|u| u.len() == problem.input_dim());
        if ok {
            Ok(())
        } else {
            Err(crate::error::Error::Dimension(format!(
                "guess does not match horizon {n} with {} states / {} inputs per stage",
                problem.state_dim(),
                problem.input_dim()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().chain(self.inputs.iter()).all(|v| v.iter().all(|x| x.is_finite()))
    }
}
