use super::config::{ScenarioConfig, Segment, Uncertainty};
use super::trajectory::{horizon_references, reference_at, uses_updated_formation};
use crate::dynamics::{rk4_step, PropellerSpeeds, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::math::{rot_z, rotation_zyx, wrap_angle};
use crate::ocp::{applied_speeds, build_horizon_problem, Feedback, FormationEdge, ProblemSetup, VehicleFeedback};
use crate::sensing::{measurement_from_geometry, AttitudePartial, FramePose};
use crate::solver::{rti_control_step, BoundState, Trajectory};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::Instant;

const MIN_SCALE: f64 = 1e-3;

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite nonnegative std").sample(rng)
    } else {
        0.0
    }
}

/// Prediction-model parameters drawn around the true ones: one multiplicative
/// Gaussian factor for the mass and one per principal inertia.
pub fn perturb_model_params<R: Rng + ?Sized>(
    truth: &VehicleParams,
    uncertainty: &Uncertainty,
    rng: &mut R,
) -> VehicleParams {
    let mut draw = |std: f64| (1.0 + gaussian(rng, std)).max(MIN_SCALE);
    let mut p = *truth;
    p.mass *= draw(uncertainty.mass_std);
    for j in &mut p.inertia {
        *j *= draw(uncertainty.inertia_std);
    }
    p
}

/// Everything logged at one control step. States are the true earth-frame
/// states at `t`, before the command is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub segment: Option<Segment>,
    pub states: Vec<VehicleState>,
    pub rpm: Vec<[f64; 4]>,
    /// Formation error norm per configured edge, in the observer's control frame.
    pub pair_errors: Vec<f64>,
    pub leader_position_error: f64,
    pub leader_yaw_error: f64,
    pub objective: f64,
    pub kkt: f64,
    pub sqp_iters: usize,
    /// Seconds.
    pub cpu_time: f64,
    pub fallback: bool,
    /// Every sensed pair lies inside the sensor cone around its desired bearing.
    pub fov_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub warm_start: bool,
    pub edges: Vec<FormationEdge>,
    pub model_params: Vec<VehicleParams>,
    pub records: Vec<StepRecord>,
}

/// Earth-frame starting positions: formation slots reached from the leader
/// along the configured edges, plus the configured offsets.
fn initial_states(cfg: &ScenarioConfig) -> Vec<VehicleState> {
    let n = cfg.formation.vehicles;
    let yaw = cfg.trajectory.start_yaw_deg.to_radians();
    let mut pos: Vec<Option<Vector3<f64>>> = vec![None; n];
    pos[0] = Some(Vector3::from(cfg.trajectory.start));
    let pairs = cfg.graph().pairs;
    let mut changed = true;
    while changed {
        changed = false;
        for e in &pairs {
            if let (Some(p), None) = (pos[e.observer], pos[e.target]) {
                pos[e.target] = Some(p + rot_z(yaw) * e.desired_vector());
                changed = true;
            }
        }
    }
    (0..n)
        .map(|v| {
            let offset = cfg.formation.initial_offsets.get(v).copied().unwrap_or([0.0; 3]);
            VehicleState::at_rest(pos[v].unwrap_or_default() + Vector3::from(offset), yaw)
        })
        .collect()
}

fn sense<R: Rng + ?Sized>(cfg: &ScenarioConfig, states: &[VehicleState], rng: &mut R) -> Result<Feedback> {
    let nz = &cfg.noise;
    let imu = nz.imu_euler_deg.to_radians();
    let gyro = nz.gyro_deg_s.to_radians();
    let vehicles = states
        .iter()
        .map(|s| {
            let attitude =
                AttitudePartial { roll: s.euler.x + gaussian(rng, imu), pitch: s.euler.y + gaussian(rng, imu) };
            let body_rates = s.body_rates + Vector3::from_fn(|_, _| gaussian(rng, gyro));
            let velocity = rot_z(-s.yaw()) * s.velocity + Vector3::from_fn(|_, _| gaussian(rng, nz.optic_flow));
            VehicleFeedback { velocity, attitude, body_rates }
        })
        .collect();
    let leader = &states[0];
    let leader_fix = FramePose {
        origin_offset: leader.position + Vector3::from_fn(|_, _| gaussian(rng, nz.abs_position)),
        yaw_offset: wrap_angle(leader.yaw() + gaussian(rng, nz.abs_yaw)),
    };
    let mut measurements = Vec::new();
    for pair in cfg.graph().pairs {
        let (i, j) = (pair.observer, pair.target);
        let body = rotation_zyx(&states[i].euler).transpose() * (states[j].position - states[i].position);
        measurements.push(measurement_from_geometry(&body, nz.relative, rng, i, j)?);
    }
    Ok(Feedback { vehicles, measurements, leader_fix })
}

fn formation_errors(cfg: &ScenarioConfig, t: f64, states: &[VehicleState]) -> Vec<f64> {
    let edges = if uses_updated_formation(t, cfg) { &cfg.formation.updated } else { &cfg.formation.edges };
    edges
        .iter()
        .map(|e| {
            let (si, sj) = (&states[e.observer], &states[e.target]);
            let actual = rot_z(-si.yaw()) * (sj.position - si.position);
            (e.desired_vector() - actual).norm()
        })
        .collect()
}

fn fov_ok(cfg: &ScenarioConfig, t: f64, states: &[VehicleState]) -> bool {
    let fov = cfg.fov();
    let graph = if uses_updated_formation(t, cfg) { cfg.updated_graph() } else { cfg.graph() };
    graph.pairs.iter().all(|e| {
        let (si, sj) = (&states[e.observer], &states[e.target]);
        let body = rotation_zyx(&si.euler).transpose() * (sj.position - si.position);
        fov.contains(&e.desired_vector(), &body)
    })
}

fn diverged(cfg: &ScenarioConfig, states: &[VehicleState]) -> Option<usize> {
    states.iter().position(|s| !s.is_finite() || s.to_vector().amax() > cfg.divergence_limit)
}

/// Closed-loop simulation of the whole schedule with the given seed.
///
/// The solver never aborts the run: failed problem assembly or an
/// infeasible QP reuses the previous command. A diverging plant does.
pub fn simulate_run(cfg: &ScenarioConfig, seed: u64) -> Result<RunLog> {
    simulate_run_partial(cfg, seed).map_err(|(e, _)| e)
}

/// Like [`simulate_run`], but a failed run still hands back the steps
/// logged before the failure.
pub fn simulate_run_partial(cfg: &ScenarioConfig, seed: u64) -> std::result::Result<RunLog, (Error, RunLog)> {
    let mut log = RunLog {
        seed,
        warm_start: cfg.warm_start,
        edges: cfg.formation.edges.clone(),
        model_params: Vec::new(),
        records: Vec::with_capacity(cfg.steps()),
    };
    match run_loop(cfg, seed, &mut log) {
        Ok(()) => Ok(log),
        Err(e) => Err((e, log)),
    }
}

fn run_loop(cfg: &ScenarioConfig, seed: u64, log: &mut RunLog) -> Result<()> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.formation.vehicles;
    let truth = cfg.vehicle.params();
    let model_params: Vec<VehicleParams> =
        (0..n).map(|_| perturb_model_params(&truth, &cfg.uncertainty, &mut rng)).collect();
    log.model_params = model_params.clone();
    let options = cfg.rti_options();
    let weights = cfg.weights.weights();

    let mut states = initial_states(cfg);
    let mut previous: Vec<PropellerSpeeds> = vec![PropellerSpeeds::hover(&truth); n];
    let mut guess: Option<Trajectory> = None;
    let mut active: Option<Vec<BoundState>> = None;
    let mut first = true;

    for k in 0..cfg.steps() {
        let t = k as f64 * cfg.dt;
        let started = Instant::now();
        let feedback = sense(cfg, &states, &mut rng)?;
        let setup = ProblemSetup {
            horizon: cfg.horizon,
            dt: cfg.dt,
            leader: 0,
            graph: if uses_updated_formation(t, cfg) { cfg.updated_graph() } else { cfg.graph() },
            weights,
            model_params: model_params.clone(),
        };
        let built = build_horizon_problem(&feedback, &setup, horizon_references(t, cfg));

        let (commands, objective, kkt, iters, fallback) = match built {
            Ok(problem) => {
                let initial = match (&guess, cfg.warm_start) {
                    (Some(g), true) => g.clone(),
                    _ => problem.hover_guess(),
                };
                let warm_active = if cfg.warm_start { active.as_deref() } else { None };
                let out = rti_control_step(&problem, initial, &options, first, warm_active);
                first = false;
                let speeds = applied_speeds(&problem, &out.applied);
                guess = Some(out.warm_start);
                active = out.warm_active;
                let s = out.status;
                (speeds, s.objective, s.kkt_tolerance, s.sqp_iterations, s.used_fallback)
            }
            Err(_) => {
                guess = None;
                active = None;
                (previous.clone(), f64::INFINITY, f64::INFINITY, 0, true)
            }
        };
        let cpu_time = started.elapsed().as_secs_f64();

        let max_rpm = cfg.vehicle.max_rpm;
        let rpm: Vec<[f64; 4]> = commands
            .iter()
            .map(|c| c.to_rpm().map(|r| if r.is_finite() { r.clamp(0.0, max_rpm) } else { 0.0 }))
            .collect();
        let reference = reference_at(t, cfg)?;
        let leader = &states[0];
        log.records.push(StepRecord {
            t,
            segment: cfg.schedule.segment_at(t),
            states: states.clone(),
            rpm: rpm.clone(),
            pair_errors: formation_errors(cfg, t, &states),
            leader_position_error: (reference.position - leader.position).norm(),
            leader_yaw_error: wrap_angle(reference.yaw - leader.yaw()).abs(),
            objective,
            kkt,
            sqp_iters: iters,
            cpu_time,
            fallback,
            fov_ok: fov_ok(cfg, t, &states),
        });

        previous = rpm.iter().map(|r| PropellerSpeeds::from_rpm(*r)).collect();
        let mut next = Vec::with_capacity(n);
        for (v, s) in states.iter().enumerate() {
            match rk4_step(s, &previous[v], &truth, cfg.dt) {
                Ok(x) => next.push(x),
                Err(_) => return Err(Error::Divergence { t: t + cfg.dt, vehicle: v }),
            }
        }
        states = next;
        if let Some(v) = diverged(cfg, &states) {
            return Err(Error::Divergence { t: t + cfg.dt, vehicle: v });
        }
    }

    Ok(())
}
