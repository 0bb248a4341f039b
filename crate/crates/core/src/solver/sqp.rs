use super::kkt::kkt_from_linearization;
use super::qp::{qp_solve_warm, BoundState, QpSolution};
use super::{condense, linearize, OptimalControlProblem, Trajectory};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOptions {
    pub qp_max_iters: usize,
    /// Levenberg shift added to the condensed Gauss-Newton Hessian.
    pub levenberg: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self { qp_max_iters: 1000, levenberg: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverStatus {
    pub kkt_tolerance: f64,
    pub sqp_iterations: usize,
    /// Seconds.
    pub cpu_time: f64,
    pub objective: f64,
    pub used_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct SqpStep {
    pub trajectory: Trajectory,
    pub status: SolverStatus,
    pub qp: Option<QpSolution>,
}

/// One full Gauss-Newton step. On any failure the guess is returned
/// unchanged with `used_fallback` set.
pub fn sqp_step<P: OptimalControlProblem + ?Sized>(
    problem: &P,
    guess: &Trajectory,
    options: &SqpOptions,
    warm_active: Option<&[BoundState]>,
) -> SqpStep {
    let start = Instant::now();
    let fallback = |qp: Option<QpSolution>| SqpStep {
        trajectory: guess.clone(),
        status: SolverStatus {
            kkt_tolerance: f64::INFINITY,
            sqp_iterations: 1,
            cpu_time: start.elapsed().as_secs_f64(),
            objective: f64::INFINITY,
            used_fallback: true,
        },
        qp,
    };

    let Ok(lin) = linearize(problem, guess) else {
        return fallback(None);
    };
    let Ok(mut sub) = condense(problem, guess, &lin) else {
        return fallback(None);
    };
    sub.regularize(options.levenberg);
    let sol = qp_solve_warm(&sub, options.qp_max_iters, warm_active);
    if !sol.feasible {
        return fallback(Some(sol));
    }

    let nu = problem.input_dim();
    let inputs = guess.inputs.iter().enumerate().map(|(k, u)| u + sol.primal.rows(k * nu, nu)).collect();
    let states = guess.states.iter().zip(&sol.states).map(|(x, dx)| x + dx).collect();
    let next = Trajectory { states, inputs };
    if !next.is_finite() {
        return fallback(Some(sol));
    }
    let (kkt, objective) = match linearize(problem, &next) {
        Ok(lin) => (kkt_from_linearization(problem, &next, &lin), lin.objective()),
        Err(_) => return fallback(Some(sol)),
    };
    SqpStep {
        trajectory: next,
        status: SolverStatus {
            kkt_tolerance: kkt,
            sqp_iterations: 1,
            cpu_time: start.elapsed().as_secs_f64(),
            objective,
            used_fallback: false,
        },
        qp: Some(sol),
    }
}
