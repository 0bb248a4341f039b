//! Joint multi-vehicle optimal control problem over one MPC horizon.
//!
//! Each vehicle's 12-dimensional state is expressed in its own inertial MPC
//! frame, so at the start of every horizon all positions and yaws are zero.
//! Decision inputs are squared rotor speeds normalized by the squared rotor
//! limit, so every input lives in `[0, 1]`.

use crate::dynamics::{
    mixing_matrix, rk4_step_with_sensitivities, PropellerSpeeds, VehicleParams, VehicleState, INPUT_DIM, STATE_DIM,
};
use crate::error::{Error, Result};
use crate::math::{drot_z, rot_z, rotation_zyx, rotation_zyx_partials, wrap_angle};
use crate::sensing::{
    frame_link, relative_displacement_control_frame, AttitudePartial, FrameLink, FramePose, RelativeMeasurement,
};
use crate::solver::{OptimalControlProblem, Residual, StepSensitivity, Trajectory};
use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

const POS: usize = 0;
const EUL: usize = 6;
const YAW: usize = 8;

/// Desired position of `target` relative to `observer`, in the observer's control frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationEdge {
    pub observer: usize,
    pub target: usize,
    pub desired: [f64; 3],
}

impl FormationEdge {
    pub fn desired_vector(&self) -> Vector3<f64> {
        Vector3::from(self.desired)
    }

    pub fn reversed(&self) -> Self {
        Self { observer: self.target, target: self.observer, desired: self.desired.map(|v| -v) }
    }
}

/// Ordered observer/target pairs; every edge appears in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    pub pairs: Vec<FormationEdge>,
}

impl FormationGraph {
    /// Completes one-directional edges with their reverse, assuming the
    /// formation keeps all yaws aligned.
    pub fn from_edges(edges: &[FormationEdge]) -> Self {
        let mut pairs = Vec::with_capacity(2 * edges.len());
        for e in edges {
            pairs.push(*e);
        }
        for e in edges {
            if !edges.iter().any(|o| o.observer == e.target && o.target == e.observer) {
                pairs.push(e.reversed());
            }
        }
        Self { pairs }
    }

    pub fn validate(&self, n_vehicles: usize) -> Result<()> {
        for p in &self.pairs {
            if p.observer == p.target || p.observer >= n_vehicles || p.target >= n_vehicles {
                return Err(Error::Config(format!("invalid formation pair {}->{}", p.observer, p.target)));
            }
            let back = self
                .pairs
                .iter()
                .find(|o| o.observer == p.target && o.target == p.observer)
                .ok_or_else(|| Error::Config(format!("pair {}->{} has no reverse", p.observer, p.target)))?;
            if (back.desired_vector() + p.desired_vector()).amax() > 1e-9 {
                return Err(Error::Config(format!(
                    "pair {}->{} is inconsistent with its reverse",
                    p.observer, p.target
                )));
            }
        }
        Ok(())
    }

    pub fn desired(&self) -> Vec<Vector3<f64>> {
        self.pairs.iter().map(FormationEdge::desired_vector).collect()
    }
}

/// Scalar weights; each expands to a multiple of the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub formation: f64,
    pub position: f64,
    pub yaw: f64,
    pub force: f64,
    pub torque: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { formation: 10.0, position: 1.0, yaw: 1.0, force: 0.1, torque: 0.1 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.formation, self.position, self.yaw, self.force, self.torque];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("weights must be nonnegative: {self:?}")))
        }
    }
}

/// References for one stage of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReference {
    /// Desired displacement per graph pair, aligned with [`FormationGraph::pairs`].
    pub formation: Vec<Vector3<f64>>,
    pub leader_position: Vector3<f64>,
    pub leader_yaw: f64,
}

/// Processed on-board sensing of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleFeedback {
    /// Velocity expressed in the vehicle's fresh inertial MPC frame.
    pub velocity: Vector3<f64>,
    pub attitude: AttitudePartial,
    pub body_rates: Vector3<f64>,
}

/// Everything the central controller receives at one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub vehicles: Vec<VehicleFeedback>,
    pub measurements: Vec<RelativeMeasurement>,
    /// Leader pose from its absolute localization unit.
    pub leader_fix: FramePose,
}

impl Feedback {
    pub fn measurement(&self, observer: usize, target: usize) -> Result<&RelativeMeasurement> {
        self.measurements
            .iter()
            .find(|m| m.observer == observer && m.target == target)
            .ok_or(Error::SensingGap { observer, target })
    }
}

/// Static data shared by every horizon problem of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSetup {
    pub horizon: usize,
    pub dt: f64,
    pub leader: usize,
    pub graph: FormationGraph,
    pub weights: Weights,
    /// Prediction-model parameters, one per vehicle.
    pub model_params: Vec<VehicleParams>,
}

#[derive(Debug, Clone)]
pub struct HorizonProblem {
    pub n_vehicles: usize,
    pub horizon: usize,
    pub dt: f64,
    pub leader: usize,
    pub graph: FormationGraph,
    pub weights: Weights,
    pub model_params: Vec<VehicleParams>,
    /// Frame link for every graph pair, observer to target.
    pub links: Vec<FrameLink>,
    pub leader_frame: FramePose,
    /// `horizon + 1` stage references.
    pub references: Vec<StageReference>,
    initial: DVector<f64>,
}

/// Assembles the horizon problem from one round of sensing.
pub fn build_horizon_problem(
    feedback: &Feedback,
    setup: &ProblemSetup,
    references: Vec<StageReference>,
) -> Result<HorizonProblem> {
    let n = feedback.vehicles.len();
    if setup.model_params.len() != n {
        return Err(Error::Dimension(format!("{} feedback blocks for {} vehicle models", n, setup.model_params.len())));
    }
    if references.len() != setup.horizon + 1 {
        return Err(Error::Dimension(format!("{} stage references for horizon {}", references.len(), setup.horizon)));
    }
    if references.iter().any(|r| r.formation.len() != setup.graph.pairs.len()) {
        return Err(Error::Dimension("formation references do not match the graph".into()));
    }
    if setup.leader >= n {
        return Err(Error::Dimension(format!("leader index {} with {n} vehicles", setup.leader)));
    }

    let mut initial = DVector::zeros(STATE_DIM * n);
    for (v, fb) in feedback.vehicles.iter().enumerate() {
        let s = VehicleState {
            position: Vector3::zeros(),
            velocity: fb.velocity,
            euler: Vector3::new(fb.attitude.roll, fb.attitude.pitch, 0.0),
            body_rates: fb.body_rates,
        };
        initial.rows_mut(STATE_DIM * v, STATE_DIM).copy_from(&s.to_vector());
    }

    let mut links = Vec::with_capacity(setup.graph.pairs.len());
    for pair in &setup.graph.pairs {
        let (i, j) = (pair.observer, pair.target);
        let m_ij = feedback.measurement(i, j)?;
        let m_ji = feedback.measurement(j, i)?;
        links.push(frame_link(m_ij, m_ji, &feedback.vehicles[i].attitude, &feedback.vehicles[j].attitude)?);
    }

    Ok(HorizonProblem {
        n_vehicles: n,
        horizon: setup.horizon,
        dt: setup.dt,
        leader: setup.leader,
        graph: setup.graph.clone(),
        weights: setup.weights,
        model_params: setup.model_params.clone(),
        links,
        leader_frame: feedback.leader_fix,
        references,
        initial,
    })
}

/// Block-diagonal RK4 step of independent vehicles, inputs in (rad/s)^2.
pub fn stacked_dynamics_step(
    stacked_state: &DVector<f64>,
    stacked_input: &DVector<f64>,
    params: &[VehicleParams],
    dt: f64,
) -> Result<StepSensitivity> {
    let n = params.len();
    if stacked_state.len() != STATE_DIM * n || stacked_input.len() != INPUT_DIM * n {
        return Err(Error::Dimension(format!(
            "stacked state {} / input {} for {n} vehicles",
            stacked_state.len(),
            stacked_input.len()
        )));
    }
    let mut next = DVector::zeros(STATE_DIM * n);
    let mut sx = DMatrix::zeros(STATE_DIM * n, STATE_DIM * n);
    let mut su = DMatrix::zeros(STATE_DIM * n, INPUT_DIM * n);
    for (v, p) in params.iter().enumerate() {
        let x = stacked_state.fixed_rows::<STATE_DIM>(STATE_DIM * v).into_owned();
        let u: Vector4<f64> = stacked_input.fixed_rows::<INPUT_DIM>(INPUT_DIM * v).into_owned();
        let (xn, a, b) = rk4_step_with_sensitivities(&x, &u, p, dt)?;
        next.rows_mut(STATE_DIM * v, STATE_DIM).copy_from(&xn);
        sx.view_mut((STATE_DIM * v, STATE_DIM * v), (STATE_DIM, STATE_DIM)).copy_from(&a);
        su.view_mut((STATE_DIM * v, INPUT_DIM * v), (STATE_DIM, INPUT_DIM)).copy_from(&b);
    }
    Ok(StepSensitivity { next, wrt_state: sx, wrt_input: su })
}

impl HorizonProblem {
    pub fn input_scale(&self, vehicle: usize) -> f64 {
        self.model_params[vehicle].max_omega_sq()
    }

    pub fn vehicle_state(&self, x: &DVector<f64>, v: usize) -> VehicleState {
        VehicleState::from_vector(&x.fixed_rows::<STATE_DIM>(STATE_DIM * v).into_owned())
    }

    /// Squared rotor speeds of vehicle `v` from a normalized stacked input.
    pub fn omega_sq(&self, u: &DVector<f64>, v: usize) -> Vector4<f64> {
        u.fixed_rows::<INPUT_DIM>(INPUT_DIM * v).into_owned() * self.input_scale(v)
    }

    pub fn hover_input(&self) -> DVector<f64> {
        let mut u = DVector::zeros(INPUT_DIM * self.n_vehicles);
        for v in 0..self.n_vehicles {
            let frac = self.model_params[v].hover_omega_sq() / self.input_scale(v);
            u.rows_mut(INPUT_DIM * v, INPUT_DIM).fill(frac);
        }
        u
    }

    /// Cold guess: hover inputs and the initial state repeated.
    pub fn hover_guess(&self) -> Trajectory {
        Trajectory::constant(&self.initial, &self.hover_input(), self.horizon)
    }

    pub fn stage_residual_dim(&self) -> usize {
        3 * self.graph.pairs.len() + 4 + 6 * self.n_vehicles
    }

    pub fn terminal_residual_dim(&self) -> usize {
        3 * self.graph.pairs.len() + 4
    }

    /// Weighted residual blocks of one stage: formation pairs, leader position,
    /// leader yaw and, unless `terminal`, per-vehicle inertial force and torque.
    pub fn stage_residuals(&self, stage: usize, x: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<Residual> {
        let nx = STATE_DIM * self.n_vehicles;
        let nu = INPUT_DIM * self.n_vehicles;
        if x.len() != nx || u.is_some_and(|u| u.len() != nu) || stage > self.horizon {
            return Err(Error::Dimension(format!("stage {stage}: state {} / horizon {}", x.len(), self.horizon)));
        }
        let reference = &self.references[stage];
        let m = match u {
            Some(_) => self.stage_residual_dim(),
            None => self.terminal_residual_dim(),
        };
        let mut r = DVector::zeros(m);
        let mut jx = DMatrix::zeros(m, nx);
        let mut ju = DMatrix::zeros(m, if u.is_some() { nu } else { 0 });
        let mut row = 0;

        let sw_f = self.weights.formation.sqrt();
        for (p, (pair, link)) in self.graph.pairs.iter().zip(&self.links).enumerate() {
            let (i, j) = (pair.observer, pair.target);
            let si = self.vehicle_state(x, i);
            let sj = self.vehicle_state(x, j);
            let actual = relative_displacement_control_frame(&si, &sj, link);
            r.fixed_rows_mut::<3>(row).copy_from(&(sw_f * (reference.formation[p] - actual)));
            let to_control = rot_z(-si.yaw());
            let in_mi = rot_z(link.rel_yaw) * sj.position + link.offset - si.position;
            jx.fixed_view_mut::<3, 3>(row, STATE_DIM * j + POS).copy_from(&(-sw_f * to_control * rot_z(link.rel_yaw)));
            let mut block = jx.fixed_view_mut::<3, 3>(row, STATE_DIM * i + POS);
            block += sw_f * to_control;
            let dyaw = sw_f * drot_z(-si.yaw()) * in_mi;
            let mut col = jx.fixed_view_mut::<3, 1>(row, STATE_DIM * i + YAW);
            col += dyaw;
            row += 3;
        }

        let l = self.leader;
        let sl = self.vehicle_state(x, l);
        let frame_rot = rot_z(self.leader_frame.yaw_offset);
        let global = frame_rot * sl.position + self.leader_frame.origin_offset;
        let sw_x = self.weights.position.sqrt();
        r.fixed_rows_mut::<3>(row).copy_from(&(sw_x * (reference.leader_position - global)));
        jx.fixed_view_mut::<3, 3>(row, STATE_DIM * l + POS).copy_from(&(-sw_x * frame_rot));
        row += 3;

        let sw_t = self.weights.yaw.sqrt();
        let yaw = sl.yaw() + self.leader_frame.yaw_offset;
        r[row] = sw_t * wrap_angle(reference.leader_yaw - yaw);
        jx[(row, STATE_DIM * l + YAW)] = -sw_t;
        row += 1;

        if let Some(u) = u {
            let sw_force = self.weights.force.sqrt();
            let sw_torque = self.weights.torque.sqrt();
            for v in 0..self.n_vehicles {
                let p = &self.model_params[v];
                let s = self.vehicle_state(x, v);
                let scale = self.input_scale(v);
                let mix = mixing_matrix(p);
                let omega_sq = self.omega_sq(u, v);
                let thrust = (mix.row(0) * omega_sq)[0];
                let body_force = Vector3::new(0.0, 0.0, -thrust);
                let rot = rotation_zyx(&s.euler);
                let inertial = rot * body_force + p.mass * p.gravity_vector();
                r.fixed_rows_mut::<3>(row).copy_from(&(sw_force * inertial));
                for (k, dr) in rotation_zyx_partials(&s.euler).iter().enumerate() {
                    jx.fixed_view_mut::<3, 1>(row, STATE_DIM * v + EUL + k).copy_from(&(sw_force * dr * body_force));
                }
                let thrust_dir = rot * Vector3::new(0.0, 0.0, -1.0);
                for c in 0..INPUT_DIM {
                    ju.fixed_view_mut::<3, 1>(row, INPUT_DIM * v + c)
                        .copy_from(&(sw_force * scale * mix[(0, c)] * thrust_dir));
                }
                row += 3;

                let torque_map = mix.fixed_view::<3, 4>(1, 0);
                r.fixed_rows_mut::<3>(row).copy_from(&(sw_torque * torque_map * omega_sq));
                ju.fixed_view_mut::<3, 4>(row, INPUT_DIM * v).copy_from(&(sw_torque * scale * torque_map));
                row += 3;
            }
        }
        debug_assert_eq!(row, m);
        Ok(Residual { value: r, wrt_state: jx, wrt_input: ju })
    }

    /// `0.5 * |r|^2` summed over the horizon at a trajectory.
    pub fn total_cost(&self, traj: &Trajectory) -> Result<f64> {
        crate::solver::objective(self, traj)
    }
}

impl OptimalControlProblem for HorizonProblem {
    fn state_dim(&self) -> usize {
        STATE_DIM * self.n_vehicles
    }

    fn input_dim(&self) -> usize {
        INPUT_DIM * self.n_vehicles
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> &DVector<f64> {
        &self.initial
    }

    fn step(&self, _stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<StepSensitivity> {
        let mut omega_sq = DVector::zeros(u.len());
        for v in 0..self.n_vehicles {
            omega_sq.rows_mut(INPUT_DIM * v, INPUT_DIM).copy_from(&self.omega_sq(u, v));
        }
        let mut out = stacked_dynamics_step(x, &omega_sq, &self.model_params, self.dt)?;
        for v in 0..self.n_vehicles {
            let s = self.input_scale(v);
            let mut block = out.wrt_input.view_mut((0, INPUT_DIM * v), (out.next.len(), INPUT_DIM));
            block *= s;
        }
        Ok(out)
    }

    fn stage_residual(&self, stage: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<Residual> {
        self.stage_residuals(stage, x, Some(u))
    }

    fn terminal_residual(&self, x: &DVector<f64>) -> Result<Residual> {
        self.stage_residuals(self.horizon, x, None)
    }

    fn input_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.input_dim();
        (DVector::zeros(n), DVector::from_element(n, 1.0))
    }

    fn state_difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut d = a - b;
        for v in 0..self.n_vehicles {
            for k in EUL..EUL + 3 {
                let idx = STATE_DIM * v + k;
                d[idx] = wrap_angle(d[idx]);
            }
        }
        d
    }
}

/// Squared rotor speeds of stage 0 for every vehicle.
pub fn applied_speeds(problem: &HorizonProblem, u0: &DVector<f64>) -> Vec<PropellerSpeeds> {
    (0..problem.n_vehicles).map(|v| PropellerSpeeds::new(problem.omega_sq(u0, v))).collect()
}
