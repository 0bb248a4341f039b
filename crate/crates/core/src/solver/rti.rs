//! Modified real-time iteration: budgeted SQP loop, infeasibility fallback
//! and the shifted, frame-transformed warm start.

use super::kkt::kkt_tolerance;
use super::qp::BoundState;
use super::sqp::{sqp_step, SolverStatus, SqpOptions};
use super::{OptimalControlProblem, Trajectory};
use crate::dynamics::STATE_DIM;
use crate::math::{rot_z, wrap_angle};
use crate::ocp::HorizonProblem;
use nalgebra::{DVector, Vector3};
use std::time::Instant;

/// Stopping budget for the running (non-first) control steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Keep iterating while the elapsed wall time is within the sample time.
    WallClock { sample_time: f64 },
    /// Deterministic replacement for the wall clock.
    Iterations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtiOptions {
    pub budget: Budget,
    pub initial_kkt: f64,
    pub running_kkt: f64,
    /// Safety cap on the first, unbudgeted solve.
    pub first_max_iters: usize,
    pub sqp: SqpOptions,
}

impl Default for RtiOptions {
    fn default() -> Self {
        Self {
            budget: Budget::WallClock { sample_time: 0.05 },
            initial_kkt: 1e-3,
            running_kkt: 10.0,
            first_max_iters: 100,
            sqp: SqpOptions::default(),
        }
    }
}

/// One-step motion of a vehicle's MPC frame, expressed in the old frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictedMotion {
    pub displacement: Vector3<f64>,
    pub yaw: f64,
}

impl PredictedMotion {
    /// Stage-1 pose of every vehicle along `traj`.
    pub fn from_trajectory(n_vehicles: usize, traj: &Trajectory) -> Vec<Self> {
        let x1 = &traj.states[1.min(traj.states.len() - 1)];
        (0..n_vehicles)
            .map(|v| Self {
                displacement: Vector3::new(x1[STATE_DIM * v], x1[STATE_DIM * v + 1], x1[STATE_DIM * v + 2]),
                yaw: x1[STATE_DIM * v + 8],
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ControlOutcome {
    /// Stage-0 input actually applied (normalized).
    pub applied: DVector<f64>,
    /// Trajectory whose first input was applied.
    pub solution: Trajectory,
    pub warm_start: Trajectory,
    /// QP working set shifted by one stage, when a QP succeeded.
    pub warm_active: Option<Vec<BoundState>>,
    pub status: SolverStatus,
}

fn reexpress(x: &DVector<f64>, motion: &[PredictedMotion]) -> DVector<f64> {
    let mut out = x.clone();
    for (v, m) in motion.iter().enumerate() {
        let base = STATE_DIM * v;
        let r = rot_z(-m.yaw);
        let p = Vector3::new(x[base], x[base + 1], x[base + 2]) - m.displacement;
        let vel = Vector3::new(x[base + 3], x[base + 4], x[base + 5]);
        out.fixed_rows_mut::<3>(base).copy_from(&(r * p));
        out.fixed_rows_mut::<3>(base + 3).copy_from(&(r * vel));
        out[base + 8] = wrap_angle(x[base + 8] - m.yaw);
    }
    out
}

/// Drops stage 0, repeats the last stage, and moves every vehicle's states
/// into the MPC frame it will have one sample later.
pub fn shift_and_transform(solution: &Trajectory, motion: &[PredictedMotion]) -> Trajectory {
    let n = solution.horizon();
    let mut states: Vec<DVector<f64>> = solution.states.iter().skip(1).map(|x| reexpress(x, motion)).collect();
    states.push(states[n - 1].clone());
    let mut inputs: Vec<DVector<f64>> = solution.inputs.iter().skip(1).cloned().collect();
    inputs.push(solution.inputs[n - 1].clone());
    Trajectory { states, inputs }
}

fn shift_active(active: &[BoundState], nu: usize) -> Vec<BoundState> {
    let mut out: Vec<BoundState> = active.iter().skip(nu).copied().collect();
    let tail: Vec<BoundState> = active[active.len() - nu..].to_vec();
    out.extend(tail);
    out
}

/// One control iteration: SQP steps within the budget, fallback on
/// infeasibility, and the warm start for the next sample.
pub fn rti_control_step(
    problem: &HorizonProblem,
    guess: Trajectory,
    options: &RtiOptions,
    is_first: bool,
    warm_active: Option<&[BoundState]>,
) -> ControlOutcome {
    let start = Instant::now();
    let mut current = if guess.check_dims(problem).is_ok() { guess } else { problem.hover_guess() };
    let mut restarted = false;
    let mut active: Option<Vec<BoundState>> = warm_active.map(<[BoundState]>::to_vec);
    let mut iterations = 0;
    let mut kkt = f64::INFINITY;
    let mut objective = f64::INFINITY;
    let mut infeasible = false;

    loop {
        let step = sqp_step(problem, &current, &options.sqp, active.as_deref());
        iterations += 1;
        if step.status.used_fallback {
            // A guess that cannot even be linearized would be shifted and
            // fail again forever, so restart once from hover.
            if step.qp.is_none() && iterations == 1 && !restarted {
                restarted = true;
                current = problem.hover_guess();
                continue;
            }
            infeasible = true;
            break;
        }
        current = step.trajectory;
        kkt = step.status.kkt_tolerance;
        objective = step.status.objective;
        active = step.qp.map(|q| q.active);

        let more = if is_first {
            kkt > options.initial_kkt && iterations < options.first_max_iters
        } else {
            let within = match options.budget {
                Budget::WallClock { sample_time } => start.elapsed().as_secs_f64() <= sample_time,
                Budget::Iterations(n) => iterations < n,
            };
            within && kkt > options.running_kkt
        };
        if !more {
            break;
        }
    }

    if infeasible {
        kkt = kkt_tolerance(problem, &current);
        objective = problem.total_cost(&current).unwrap_or(f64::INFINITY);
    }
    let motion = PredictedMotion::from_trajectory(problem.n_vehicles, &current);
    let warm_start = shift_and_transform(&current, &motion);
    let nu = problem.input_dim();
    ControlOutcome {
        applied: current.inputs[0].clone(),
        warm_active: if infeasible { None } else { active.map(|a| shift_active(&a, nu)) },
        warm_start,
        solution: current,
        status: SolverStatus {
            kkt_tolerance: kkt,
            sqp_iterations: iterations,
            cpu_time: start.elapsed().as_secs_f64(),
            objective,
            used_fallback: infeasible,
        },
    }
}
