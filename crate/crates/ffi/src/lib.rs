//! C ABI over the formation NMPC simulator.
//!
//! Every function returns an [`FnmpcStatus`]; outputs go through caller-owned
//! pointers. On failure a message is kept per thread and can be copied out
//! with [`fnmpc_last_error`]. Panics never cross the boundary.

use formation_nmpc::dynamics::{mixer, rk4_step, PropellerSpeeds, VehicleParams, VehicleState};
use formation_nmpc::scenario::{simulate_run, RunLog, ScenarioConfig};
use formation_nmpc::sensing::{relative_yaw_estimate, AttitudePartial, RelativeMeasurement};
use formation_nmpc::Error;
use nalgebra::{Vector3, Vector4};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    OutOfRange = 4,
    /// No run has completed on this handle yet.
    NoRun = 5,
    Infeasible = 6,
    Singularity = 7,
    Geometry = 8,
    Divergence = 9,
    Numerical = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: FnmpcStatus, message: impl Into<String>) -> FnmpcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
    status
}

fn status_of(err: &Error) -> FnmpcStatus {
    match err {
        Error::RotorOutOfBounds { .. } | Error::InfeasibleWrench { .. } => FnmpcStatus::Infeasible,
        Error::Singularity { .. } => FnmpcStatus::Singularity,
        Error::DegenerateGeometry | Error::IllConditionedGeometry(..) | Error::SensingGap { .. } => {
            FnmpcStatus::Geometry
        }
        Error::Divergence { .. } => FnmpcStatus::Divergence,
        Error::NonFinite(_) | Error::Dimension(_) | Error::Aggregation(_) => FnmpcStatus::Numerical,
        Error::Schedule { .. } | Error::Config(_) | Error::Io(_) => FnmpcStatus::InvalidConfig,
    }
}

fn from_error(err: Error) -> FnmpcStatus {
    fail(status_of(&err), err.to_string())
}

fn guarded(body: impl FnOnce() -> FnmpcStatus) -> FnmpcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(FnmpcStatus::Panic, "internal panic"),
    }
}

/// Scenario configuration plus the log of the most recent run.
pub struct FnmpcSimulation {
    config: ScenarioConfig,
    log: Option<RunLog>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FnmpcVehicleState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Roll, pitch, yaw in radians.
    pub euler: [f64; 3],
    pub body_rates: [f64; 3],
}

impl From<&VehicleState> for FnmpcVehicleState {
    fn from(s: &VehicleState) -> Self {
        Self {
            position: s.position.into(),
            velocity: s.velocity.into(),
            euler: s.euler.into(),
            body_rates: s.body_rates.into(),
        }
    }
}

impl From<&FnmpcVehicleState> for VehicleState {
    fn from(s: &FnmpcVehicleState) -> Self {
        Self {
            position: Vector3::from(s.position),
            velocity: Vector3::from(s.velocity),
            euler: Vector3::from(s.euler),
            body_rates: Vector3::from(s.body_rates),
        }
    }
}

/// Per-step scalar metrics of a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FnmpcStepMetrics {
    pub t: f64,
    pub max_pair_error: f64,
    pub leader_position_error: f64,
    pub leader_yaw_error: f64,
    pub objective: f64,
    pub kkt: f64,
    pub sqp_iterations: usize,
    /// Seconds.
    pub cpu_time: f64,
    pub fallback: bool,
    pub fov_ok: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnmpcVehicleParams {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub arm_length: f64,
    pub thrust_coeff: f64,
    pub torque_coeff: f64,
    pub max_prop_speed: f64,
    pub gravity: f64,
}

impl From<VehicleParams> for FnmpcVehicleParams {
    fn from(p: VehicleParams) -> Self {
        Self {
            mass: p.mass,
            inertia: p.inertia,
            arm_length: p.arm_length,
            thrust_coeff: p.thrust_coeff,
            torque_coeff: p.torque_coeff,
            max_prop_speed: p.max_prop_speed,
            gravity: p.gravity,
        }
    }
}

impl From<&FnmpcVehicleParams> for VehicleParams {
    fn from(p: &FnmpcVehicleParams) -> Self {
        Self {
            mass: p.mass,
            inertia: p.inertia,
            arm_length: p.arm_length,
            thrust_coeff: p.thrust_coeff,
            torque_coeff: p.torque_coeff,
            max_prop_speed: p.max_prop_speed,
            gravity: p.gravity,
        }
    }
}

/// Range/bearing reading of `target` in the body frame of `observer`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnmpcMeasurement {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub observer: usize,
    pub target: usize,
}

impl From<&FnmpcMeasurement> for RelativeMeasurement {
    fn from(m: &FnmpcMeasurement) -> Self {
        Self { range: m.range, azimuth: m.azimuth, elevation: m.elevation, observer: m.observer, target: m.target }
    }
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `capacity`. Returns the full message length in bytes.
///
/// # Safety
/// `buffer` must be null or valid for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buffer.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buffer.cast::<u8>(), n);
            *buffer.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a simulation from a TOML document; null selects all defaults.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be valid
/// for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_new(
    config_toml: *const c_char,
    out: *mut *mut FnmpcSimulation,
) -> FnmpcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(FnmpcStatus::NullPointer, "out is null");
        }
        let config = if config_toml.is_null() {
            ScenarioConfig::default()
        } else {
            let Ok(text) = CStr::from_ptr(config_toml).to_str() else {
                return fail(FnmpcStatus::InvalidUtf8, "config is not UTF-8");
            };
            match ScenarioConfig::from_toml_str(text) {
                Ok(c) => c,
                Err(e) => return from_error(e),
            }
        };
        *out = Box::into_raw(Box::new(FnmpcSimulation { config, log: None }));
        FnmpcStatus::Ok
    })
}

/// # Safety
/// `sim` must be null or a handle from [`fnmpc_simulation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_free(sim: *mut FnmpcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Overrides the SQP budget: zero restores the wall-clock budget, any other
/// value fixes the iterations per step and makes runs reproducible.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_set_test_mode(
    sim: *mut FnmpcSimulation,
    sqp_iterations: usize,
) -> FnmpcStatus {
    guarded(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(FnmpcStatus::NullPointer, "sim is null");
        };
        sim.config.test_mode = (sqp_iterations > 0).then_some(sqp_iterations);
        FnmpcStatus::Ok
    })
}

/// Simulates the whole scenario for `seed`, replacing any previous log.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_run(sim: *mut FnmpcSimulation, seed: u64) -> FnmpcStatus {
    guarded(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(FnmpcStatus::NullPointer, "sim is null");
        };
        sim.log = None;
        match simulate_run(&sim.config, seed) {
            Ok(log) => {
                sim.log = Some(log);
                FnmpcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of vehicles, control steps in the scenario, and sample time.
///
/// # Safety
/// `sim` must be a live handle; each output must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_dims(
    sim: *const FnmpcSimulation,
    vehicles: *mut usize,
    steps: *mut usize,
    dt: *mut f64,
) -> FnmpcStatus {
    guarded(|| {
        let Some(sim) = sim.as_ref() else {
            return fail(FnmpcStatus::NullPointer, "sim is null");
        };
        if let Some(v) = vehicles.as_mut() {
            *v = sim.config.formation.vehicles;
        }
        if let Some(s) = steps.as_mut() {
            *s = sim.config.steps();
        }
        if let Some(d) = dt.as_mut() {
            *d = sim.config.dt;
        }
        FnmpcStatus::Ok
    })
}

unsafe fn logged<'a>(sim: *const FnmpcSimulation) -> Result<&'a RunLog, FnmpcStatus> {
    let sim = sim.as_ref().ok_or_else(|| fail(FnmpcStatus::NullPointer, "sim is null"))?;
    sim.log.as_ref().ok_or_else(|| fail(FnmpcStatus::NoRun, "no completed run"))
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_step_metrics(
    sim: *const FnmpcSimulation,
    step: usize,
    out: *mut FnmpcStepMetrics,
) -> FnmpcStatus {
    guarded(|| {
        let log = match logged(sim) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let Some(out) = out.as_mut() else {
            return fail(FnmpcStatus::NullPointer, "out is null");
        };
        let Some(r) = log.records.get(step) else {
            return fail(FnmpcStatus::OutOfRange, format!("step {step} of {}", log.records.len()));
        };
        *out = FnmpcStepMetrics {
            t: r.t,
            max_pair_error: r.pair_errors.iter().cloned().fold(0.0, f64::max),
            leader_position_error: r.leader_position_error,
            leader_yaw_error: r.leader_yaw_error,
            objective: r.objective,
            kkt: r.kkt,
            sqp_iterations: r.sqp_iters,
            cpu_time: r.cpu_time,
            fallback: r.fallback,
            fov_ok: r.fov_ok,
        };
        FnmpcStatus::Ok
    })
}

/// True earth-frame state and applied rotor speeds of one vehicle at one step.
///
/// # Safety
/// `sim` must be a live handle; `state` must be null or writable and `rpm`
/// null or valid for four doubles.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_vehicle(
    sim: *const FnmpcSimulation,
    step: usize,
    vehicle: usize,
    state: *mut FnmpcVehicleState,
    rpm: *mut f64,
) -> FnmpcStatus {
    guarded(|| {
        let log = match logged(sim) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let Some(r) = log.records.get(step) else {
            return fail(FnmpcStatus::OutOfRange, format!("step {step} of {}", log.records.len()));
        };
        let (Some(s), Some(w)) = (r.states.get(vehicle), r.rpm.get(vehicle)) else {
            return fail(FnmpcStatus::OutOfRange, format!("vehicle {vehicle} of {}", r.states.len()));
        };
        if let Some(out) = state.as_mut() {
            *out = s.into();
        }
        if !rpm.is_null() {
            std::ptr::copy_nonoverlapping(w.as_ptr(), rpm, 4);
        }
        FnmpcStatus::Ok
    })
}

/// Pair error norms of one step, in configured edge order. At most
/// `capacity` values are written; `count` receives the number of edges.
///
/// # Safety
/// `sim` must be a live handle; `errors` null or valid for `capacity`
/// doubles; `count` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_simulation_pair_errors(
    sim: *const FnmpcSimulation,
    step: usize,
    errors: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> FnmpcStatus {
    guarded(|| {
        let log = match logged(sim) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let Some(r) = log.records.get(step) else {
            return fail(FnmpcStatus::OutOfRange, format!("step {step} of {}", log.records.len()));
        };
        if let Some(c) = count.as_mut() {
            *c = r.pair_errors.len();
        }
        if !errors.is_null() {
            std::ptr::copy_nonoverlapping(r.pair_errors.as_ptr(), errors, r.pair_errors.len().min(capacity));
        }
        FnmpcStatus::Ok
    })
}

/// The simulator's nominal vehicle parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_default_params(out: *mut FnmpcVehicleParams) -> FnmpcStatus {
    guarded(|| match out.as_mut() {
        Some(out) => {
            *out = VehicleParams::default().into();
            FnmpcStatus::Ok
        }
        None => fail(FnmpcStatus::NullPointer, "out is null"),
    })
}

/// Squared rotor speeds to body thrust (upward, N) and torque (N m).
///
/// # Safety
/// `params` must be readable, `omega_sq` valid for four doubles, `thrust`
/// writable and `torque` valid for three doubles.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_mixer(
    params: *const FnmpcVehicleParams,
    omega_sq: *const f64,
    thrust: *mut f64,
    torque: *mut f64,
) -> FnmpcStatus {
    guarded(|| {
        let (Some(p), false, Some(thrust), false) =
            (params.as_ref(), omega_sq.is_null(), thrust.as_mut(), torque.is_null())
        else {
            return fail(FnmpcStatus::NullPointer, "null argument");
        };
        let w = Vector4::from_column_slice(std::slice::from_raw_parts(omega_sq, 4));
        match mixer(&PropellerSpeeds::new(w), &p.into()) {
            Ok(wrench) => {
                *thrust = wrench.thrust();
                std::ptr::copy_nonoverlapping(wrench.body_torque.as_ptr(), torque, 3);
                FnmpcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// One RK4 step of length `dt` with squared rotor speeds held constant.
///
/// # Safety
/// `params` and `state` must be readable, `omega_sq` valid for four doubles
/// and `out` writable. `out` may alias `state`.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_rk4_step(
    params: *const FnmpcVehicleParams,
    state: *const FnmpcVehicleState,
    omega_sq: *const f64,
    dt: f64,
    out: *mut FnmpcVehicleState,
) -> FnmpcStatus {
    guarded(|| {
        let (Some(p), Some(s), false, false) = (params.as_ref(), state.as_ref(), omega_sq.is_null(), out.is_null())
        else {
            return fail(FnmpcStatus::NullPointer, "null argument");
        };
        let w = Vector4::from_column_slice(std::slice::from_raw_parts(omega_sq, 4));
        match rk4_step(&s.into(), &PropellerSpeeds::new(w), &p.into(), dt) {
            Ok(next) => {
                *out = (&next).into();
                FnmpcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Estimates `yaw_1 - yaw_2` from mutual readings and both vehicles' roll and pitch.
///
/// # Safety
/// `meas_12` and `meas_21` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fnmpc_relative_yaw(
    meas_12: *const FnmpcMeasurement,
    meas_21: *const FnmpcMeasurement,
    roll_1: f64,
    pitch_1: f64,
    roll_2: f64,
    pitch_2: f64,
    out: *mut f64,
) -> FnmpcStatus {
    guarded(|| {
        let (Some(m12), Some(m21), Some(out)) = (meas_12.as_ref(), meas_21.as_ref(), out.as_mut()) else {
            return fail(FnmpcStatus::NullPointer, "null argument");
        };
        let a1 = AttitudePartial { roll: roll_1, pitch: pitch_1 };
        let a2 = AttitudePartial { roll: roll_2, pitch: pitch_2 };
        match relative_yaw_estimate(&m12.into(), &m21.into(), &a1, &a2) {
            Ok(y) => {
                *out = y;
                FnmpcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
