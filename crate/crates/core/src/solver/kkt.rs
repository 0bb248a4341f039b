use super::{linearize, Linearization, OptimalControlProblem, Trajectory};
use crate::error::Result;
use nalgebra::DVector;

const BOUND_TOL: f64 = 1e-9;

/// Gradient of the total cost with respect to every stage input, with the
/// state multipliers chosen by the adjoint recursion so that stationarity in
/// the states holds exactly.
pub(crate) fn reduced_gradient(lin: &Linearization) -> Vec<DVector<f64>> {
    let n = lin.steps.len();
    let mut lambda = lin.terminal.wrt_state.tr_mul(&lin.terminal.value);
    let mut grads = vec![DVector::zeros(0); n];
    for k in (0..n).rev() {
        let stage = &lin.stages[k];
        let step = &lin.steps[k];
        grads[k] = stage.wrt_input.tr_mul(&stage.value) + step.wrt_input.tr_mul(&lambda);
        lambda = stage.wrt_state.tr_mul(&stage.value) + step.wrt_state.tr_mul(&lambda);
    }
    grads
}

pub(crate) fn kkt_from_linearization<P: OptimalControlProblem + ?Sized>(
    problem: &P,
    point: &Trajectory,
    lin: &Linearization,
) -> f64 {
    let (lb, ub) = problem.input_bounds();
    let mut worst: f64 = lin.initial_gap.amax();
    for d in &lin.defects {
        worst = worst.max(d.amax());
    }
    for (u, g) in point.inputs.iter().zip(reduced_gradient(lin)) {
        for i in 0..u.len() {
            worst = worst.max(lb[i] - u[i]).max(u[i] - ub[i]);
            let at_lower = u[i] <= lb[i] + BOUND_TOL;
            let at_upper = u[i] >= ub[i] - BOUND_TOL;
            let stationarity = if (at_lower && g[i] > 0.0) || (at_upper && g[i] < 0.0) { 0.0 } else { g[i].abs() };
            worst = worst.max(stationarity);
        }
    }
    worst
}

/// Infinity norm of the NLP KKT residual: Lagrangian stationarity in the
/// inputs (sign-feasible bound multipliers absorb gradients pushing into an
/// active bound), shooting gaps including the initial-value constraint, and
/// bound violation. Returns `inf` if the point cannot be linearized.
pub fn kkt_tolerance<P: OptimalControlProblem + ?Sized>(problem: &P, point: &Trajectory) -> f64 {
    match linearize(problem, point) {
        Ok(lin) => kkt_from_linearization(problem, point, &lin),
        Err(_) => f64::INFINITY,
    }
}

/// Total least-squares cost `0.5 * sum |r_k|^2` at a trajectory.
pub fn objective<P: OptimalControlProblem + ?Sized>(problem: &P, point: &Trajectory) -> Result<f64> {
    point.check_dims(problem)?;
    let n = problem.horizon();
    let mut total = 0.0;
    for k in 0..n {
        total += 0.5 * problem.stage_residual(k, &point.states[k], &point.inputs[k])?.value.norm_squared();
    }
    total += 0.5 * problem.terminal_residual(&point.states[n])?.value.norm_squared();
    Ok(total)
}
