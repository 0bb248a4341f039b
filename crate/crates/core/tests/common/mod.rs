//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use formation_nmpc::dynamics::{rk4_step, PropellerSpeeds, VehicleParams, VehicleState};
use formation_nmpc::math::{rot_z, rotation_zyx, wrap_angle};
use formation_nmpc::ocp::{
    build_horizon_problem, Feedback, FormationGraph, HorizonProblem, ProblemSetup, StageReference, VehicleFeedback,
    Weights,
};
use formation_nmpc::scenario::ScenarioConfig;
use formation_nmpc::sensing::{measurement_from_geometry, AttitudePartial, FramePose, RelativeMeasurement};
use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian elimination with partial pivoting, written out by hand so the
/// QP oracle shares no linear algebra with the solver under test.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(*bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        let pivot_row = m[col].clone();
        for row in m.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (dst, src) in row.iter_mut().zip(&pivot_row).skip(col) {
                *dst -= f * src;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    Some(x)
}

pub fn qp_value(h: &DMatrix<f64>, q: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + q.dot(x)
}

/// Minimum of `0.5 x'Hx + q'x` over a box by trying all `3^n` assignments of
/// each variable to free, lower or upper.
pub fn enumerate_box_qp(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let n = q.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut pattern = vec![0u8; n];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match pattern[i] {
                1 => x[i] = lb[i],
                2 => x[i] = ub[i],
                _ => {}
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
        if !free.is_empty() {
            let a: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| h[(i, j)]).collect()).collect();
            let rhs: Vec<f64> = free
                .iter()
                .map(|&i| -q[i] - (0..n).filter(|j| pattern[*j] != 0).map(|j| h[(i, j)] * x[j]).sum::<f64>())
                .collect();
            let Some(sol) = gauss_solve(&a, &rhs) else { continue };
            for (k, &i) in free.iter().enumerate() {
                x[i] = sol[k];
            }
        }
        if (0..n).any(|i| x[i] < lb[i] - 1e-12 || x[i] > ub[i] + 1e-12) {
            continue;
        }
        let f = qp_value(h, q, &x);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((x, f));
        }
    }
    best.expect("the all-bounds corner is always feasible")
}

/// Random strictly convex box QP with `n` variables and a mix of active bounds.
pub fn random_box_qp<R: Rng>(rng: &mut R, n: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let a = DMatrix::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
    let h = a.transpose() * &a + DMatrix::identity(n, n) * 0.05;
    let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let lb = DVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
    let ub = DVector::from_fn(n, |i, _| lb[i] + rng.random_range(0.1..1.5));
    (h, q, lb, ub)
}

/// Earth-frame states of three vehicles near the default formation slots.
pub fn random_states<R: Rng>(rng: &mut R, cfg: &ScenarioConfig) -> Vec<VehicleState> {
    let base_yaw = rng.random_range(-3.0..3.0);
    let origin = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-4.0..-1.0));
    let slots = [Vector3::zeros(), Vector3::new(-1.0, -0.5, -0.5), Vector3::new(-1.0, 0.5, -0.5)];
    (0..cfg.formation.vehicles)
        .map(|v| {
            let jitter = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
            VehicleState {
                position: origin + rot_z(base_yaw) * slots[v] + jitter,
                velocity: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                euler: Vector3::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    wrap_angle(base_yaw + rng.random_range(-0.3..0.3)),
                ),
                body_rates: Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            }
        })
        .collect()
}

/// Exact on-board sensing of earth-frame `states`.
pub fn noiseless_feedback(graph: &FormationGraph, states: &[VehicleState]) -> Feedback {
    let mut dummy = rng(0);
    let vehicles = states
        .iter()
        .map(|s| VehicleFeedback {
            velocity: rot_z(-s.yaw()) * s.velocity,
            attitude: AttitudePartial { roll: s.euler.x, pitch: s.euler.y },
            body_rates: s.body_rates,
        })
        .collect();
    let measurements = graph
        .pairs
        .iter()
        .map(|p| {
            let (i, j) = (p.observer, p.target);
            let body = rotation_zyx(&states[i].euler).transpose() * (states[j].position - states[i].position);
            measurement_from_geometry(&body, 0.0, &mut dummy, i, j).unwrap()
        })
        .collect();
    Feedback {
        vehicles,
        measurements,
        leader_fix: FramePose { origin_offset: states[0].position, yaw_offset: states[0].yaw() },
    }
}

pub fn setup(cfg: &ScenarioConfig, horizon: usize) -> ProblemSetup {
    ProblemSetup {
        horizon,
        dt: cfg.dt,
        leader: 0,
        graph: cfg.graph(),
        weights: Weights::default(),
        model_params: vec![VehicleParams::default(); cfg.formation.vehicles],
    }
}

/// Random horizon problem with perturbed references so no residual is zero.
pub fn random_problem<R: Rng>(rng: &mut R, horizon: usize) -> (HorizonProblem, Vec<VehicleState>) {
    let cfg = ScenarioConfig::default();
    let states = random_states(rng, &cfg);
    let graph = cfg.graph();
    let references = (0..=horizon)
        .map(|_| StageReference {
            formation: graph
                .desired()
                .iter()
                .map(|d| d + Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2)))
                .collect(),
            leader_position: states[0].position + Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            leader_yaw: wrap_angle(states[0].yaw() + rng.random_range(-0.5..0.5)),
        })
        .collect();
    let feedback = noiseless_feedback(&graph, &states);
    (build_horizon_problem(&feedback, &setup(&cfg, horizon), references).unwrap(), states)
}

/// Hover inputs with a random perturbation, inside the bounds.
pub fn random_inputs<R: Rng>(rng: &mut R, problem: &HorizonProblem) -> Vec<DVector<f64>> {
    let hover = problem.hover_input();
    (0..problem.horizon).map(|_| hover.map(|h| h + rng.random_range(-0.03..0.03))).collect()
}

/// `max |a - b| / max |b|` over two matrices of equal shape.
pub fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn central_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, rel_step: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    jac
}

pub fn tumbling_start() -> VehicleState {
    VehicleState {
        position: Vector3::new(0.0, 0.0, -2.0),
        velocity: Vector3::new(0.5, -0.3, 0.2),
        euler: Vector3::new(0.1, -0.2, 0.3),
        body_rates: Vector3::new(1.5, -1.0, 2.0),
    }
}

/// Asymmetric rotor speeds producing a sustained roll/yaw torque.
pub fn tumbling_input(params: &VehicleParams) -> PropellerSpeeds {
    let h = params.hover_omega_sq();
    PropellerSpeeds::new(Vector4::new(1.05 * h, 1.0 * h, 0.95 * h, 0.98 * h))
}

pub fn integrate(
    state: &VehicleState,
    speeds: &PropellerSpeeds,
    params: &VehicleParams,
    dt: f64,
    duration: f64,
) -> VehicleState {
    let steps = (duration / dt).round() as usize;
    let mut s = *state;
    for _ in 0..steps {
        s = rk4_step(&s, speeds, params, dt).unwrap();
    }
    s
}

/// Final-state error with wrapped Euler differences.
pub fn state_error(a: &VehicleState, b: &VehicleState) -> f64 {
    let mut d = a.to_vector() - b.to_vector();
    for k in 6..9 {
        d[k] = wrap_angle(d[k]);
    }
    d.amax()
}

/// Least-squares slope of `log(err)` against `log(dt)` for the tumbling
/// maneuver, integrated for one second, against a `1e-5` reference.
pub fn rk4_order_slope() -> (f64, Vec<(f64, f64)>) {
    let params = VehicleParams::default();
    let speeds = tumbling_input(&params);
    let x0 = tumbling_start();
    let reference = integrate(&x0, &speeds, &params, 1e-5, 1.0);
    let samples: Vec<(f64, f64)> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| (dt, state_error(&integrate(&x0, &speeds, &params, dt, 1.0), &reference)))
        .collect();
    let pts: Vec<(f64, f64)> = samples.iter().map(|(d, e)| (d.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx, samples)
}

/// Noiseless mutual readings of two randomly posed vehicles with roll and
/// pitch up to 20 degrees, plus the true `yaw_1 - yaw_2`.
pub fn random_tilted_pair<R: Rng>(
    rng: &mut R,
) -> (RelativeMeasurement, RelativeMeasurement, AttitudePartial, AttitudePartial, f64) {
    let lim = 20f64.to_radians();
    loop {
        let e1 = Vector3::new(rng.random_range(-lim..lim), rng.random_range(-lim..lim), rng.random_range(-3.1..3.1));
        let e2 = Vector3::new(rng.random_range(-lim..lim), rng.random_range(-lim..lim), rng.random_range(-3.1..3.1));
        let p1: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let p2: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let d = p2 - p1;
        // Keep away from the vertical, where the horizontal bearing vanishes.
        if d.x.hypot(d.y) < 0.2 * d.norm() {
            continue;
        }
        let mut dummy = ChaCha8Rng::seed_from_u64(0);
        let m12 = measurement_from_geometry(&(rotation_zyx(&e1).transpose() * d), 0.0, &mut dummy, 1, 2).unwrap();
        let m21 = measurement_from_geometry(&(rotation_zyx(&e2).transpose() * -d), 0.0, &mut dummy, 2, 1).unwrap();
        return (
            m12,
            m21,
            AttitudePartial { roll: e1.x, pitch: e1.y },
            AttitudePartial { roll: e2.x, pitch: e2.y },
            wrap_angle(e1.z - e2.z),
        );
    }
}

/// Worst relative mismatch between analytic and central-difference
/// derivatives on one random problem: step sensitivities, stage and terminal
/// residual Jacobians, and the condensed cost gradient along a rollout.
pub fn derivative_check(seed: u64) -> f64 {
    use formation_nmpc::solver::{condense, linearize, OptimalControlProblem, Trajectory};
    let mut r = rng(seed);
    let (p, _) = random_problem(&mut r, 4);
    let traj = Trajectory::rollout(&p, random_inputs(&mut r, &p)).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..p.horizon {
        let (x, u) = (&traj.states[k], &traj.inputs[k]);
        let s = p.step(k, x, u).unwrap();
        worst = worst.max(relative_gap(&s.wrt_state, &central_jacobian(|x| p.step(k, x, u).unwrap().next, x, h)));
        worst = worst.max(relative_gap(&s.wrt_input, &central_jacobian(|u| p.step(k, x, u).unwrap().next, u, h)));
        let res = p.stage_residual(k, x, u).unwrap();
        worst = worst
            .max(relative_gap(&res.wrt_state, &central_jacobian(|x| p.stage_residual(k, x, u).unwrap().value, x, h)));
        worst = worst
            .max(relative_gap(&res.wrt_input, &central_jacobian(|u| p.stage_residual(k, x, u).unwrap().value, u, h)));
    }
    let xn = &traj.states[p.horizon];
    let term = p.terminal_residual(xn).unwrap();
    worst =
        worst.max(relative_gap(&term.wrt_state, &central_jacobian(|x| p.terminal_residual(x).unwrap().value, xn, h)));

    let nu = p.input_dim();
    let flat = DVector::from_iterator(nu * p.horizon, traj.inputs.iter().flat_map(|u| u.iter().copied()));
    let cost = |z: &DVector<f64>| {
        let inputs = (0..p.horizon).map(|k| z.rows(k * nu, nu).into_owned()).collect();
        DVector::from_element(1, p.total_cost(&Trajectory::rollout(&p, inputs).unwrap()).unwrap())
    };
    let fd = central_jacobian(cost, &flat, h).transpose();
    let sub = condense(&p, &traj, &linearize(&p, &traj).unwrap()).unwrap();
    let analytic = DMatrix::from_column_slice(sub.gradient.len(), 1, sub.gradient.as_slice());
    worst.max(relative_gap(&analytic, &fd))
}
