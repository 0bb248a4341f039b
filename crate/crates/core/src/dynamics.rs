//! Six-DOF quadrotor rigid-body model.
//!
//! Axes follow NED: the earth frame has `z` pointing down, so gravity is `+z`
//! and rotor thrust acts along `-z` of the body. Attitude is parameterized by
//! Z-Y-X Euler angles `(roll, pitch, yaw)`; body rates are expressed in the
//! body frame. The same model serves as the simulated plant (true parameters)
//! and as the prediction model of the controller (perturbed parameters).

use crate::error::{Error, Result};
use crate::math::{rotation_zyx, rotation_zyx_partials, skew, wrap_angle};
use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

pub const STATE_DIM: usize = 12;
pub const INPUT_DIM: usize = 4;

/// Half-width of the excluded band around `|pitch| = pi/2`.
pub const PITCH_GUARD: f64 = 1e-3;

pub const GRAVITY: f64 = 9.81;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, INPUT_DIM>;

pub fn rpm_to_rad_per_sec(rpm: f64) -> f64 {
    rpm * 2.0 * PI / 60.0
}

pub fn rad_per_sec_to_rpm(omega: f64) -> f64 {
    omega * 60.0 / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Z-Y-X Euler angles `(roll, pitch, yaw)`.
    pub euler: Vector3<f64>,
    pub body_rates: Vector3<f64>,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        Self { position, euler: Vector3::new(0.0, 0.0, yaw), ..Default::default() }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(6).copy_from(&self.euler);
        x.fixed_rows_mut::<3>(9).copy_from(&self.body_rates);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into(),
            velocity: x.fixed_rows::<3>(3).into(),
            euler: x.fixed_rows::<3>(6).into(),
            body_rates: x.fixed_rows::<3>(9).into(),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.euler.z
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the body inertia tensor, kg m^2.
    pub inertia: [f64; 3],
    /// Rotor-to-center distance, m.
    pub arm_length: f64,
    /// N / (rad/s)^2
    pub thrust_coeff: f64,
    /// N m / (rad/s)^2
    pub torque_coeff: f64,
    /// rad/s
    pub max_prop_speed: f64,
    /// m/s^2, along `+z` of the earth frame.
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::from_hover(0.5, [2.5e-3, 2.5e-3, 5.0e-3], 0.18, 3000.0, 6000.0, 0.016)
    }
}

impl VehicleParams {
    /// Builds parameters whose thrust coefficient makes the vehicle hover at `hover_rpm`.
    pub fn from_hover(
        mass: f64,
        inertia: [f64; 3],
        arm_length: f64,
        hover_rpm: f64,
        max_rpm: f64,
        torque_to_thrust: f64,
    ) -> Self {
        let omega_h = rpm_to_rad_per_sec(hover_rpm);
        let thrust_coeff = mass * GRAVITY / (4.0 * omega_h * omega_h);
        Self {
            mass,
            inertia,
            arm_length,
            thrust_coeff,
            torque_coeff: torque_to_thrust * thrust_coeff,
            max_prop_speed: rpm_to_rad_per_sec(max_rpm),
            gravity: GRAVITY,
        }
    }

    pub fn max_omega_sq(&self) -> f64 {
        self.max_prop_speed * self.max_prop_speed
    }

    /// Squared rotor speed that balances gravity with four equal rotors.
    pub fn hover_omega_sq(&self) -> f64 {
        self.mass * self.gravity / (4.0 * self.thrust_coeff)
    }

    pub fn inertia_vector(&self) -> Vector3<f64> {
        Vector3::from(self.inertia)
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mass,
            self.inertia[0],
            self.inertia[1],
            self.inertia[2],
            self.arm_length,
            self.thrust_coeff,
            self.torque_coeff,
            self.max_prop_speed,
            self.gravity,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("vehicle parameters must be positive: {self:?}")))
        }
    }
}

/// Squared propeller speeds, (rad/s)^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropellerSpeeds {
    pub omega_sq: Vector4<f64>,
}

impl PropellerSpeeds {
    pub fn new(omega_sq: Vector4<f64>) -> Self {
        Self { omega_sq }
    }

    pub fn uniform(omega_sq: f64) -> Self {
        Self::new(Vector4::repeat(omega_sq))
    }

    pub fn hover(params: &VehicleParams) -> Self {
        Self::uniform(params.hover_omega_sq())
    }

    pub fn from_rpm(rpm: [f64; 4]) -> Self {
        Self::new(Vector4::from(rpm.map(|r| rpm_to_rad_per_sec(r).powi(2))))
    }

    pub fn to_rpm(&self) -> [f64; 4] {
        let o = self.omega_sq;
        [0, 1, 2, 3].map(|i| rad_per_sec_to_rpm(o[i].max(0.0).sqrt()))
    }

    pub fn check(&self, params: &VehicleParams) -> Result<()> {
        let max = params.max_omega_sq();
        for (rotor, &value) in self.omega_sq.iter().enumerate() {
            if !(0.0..=max).contains(&value) {
                return Err(Error::RotorOutOfBounds { rotor, value, max });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    /// Body-frame force; only the third component is populated by the rotors.
    pub body_force: Vector3<f64>,
    pub body_torque: Vector3<f64>,
}

impl Wrench {
    /// Wrench with upward (`-z` body) thrust of magnitude `thrust`.
    pub fn from_thrust_torque(thrust: f64, torque: Vector3<f64>) -> Self {
        Self { body_force: Vector3::new(0.0, 0.0, -thrust), body_torque: torque }
    }

    pub fn thrust(&self) -> f64 {
        -self.body_force.z
    }
}

/// Maps squared rotor speeds to `(thrust, roll, pitch, yaw torque)`.
pub fn mixing_matrix(params: &VehicleParams) -> Matrix4<f64> {
    let ct = params.thrust_coeff;
    let cq = params.torque_coeff;
    let dct = params.arm_length * ct;
    Matrix4::new(
        ct, ct, ct, ct, //
        0.0, dct, 0.0, -dct, //
        -dct, 0.0, dct, 0.0, //
        cq, -cq, cq, -cq,
    )
}

pub fn mixer(speeds: &PropellerSpeeds, params: &VehicleParams) -> Result<Wrench> {
    speeds.check(params)?;
    Ok(mix_unchecked(&speeds.omega_sq, params))
}

fn mix_unchecked(omega_sq: &Vector4<f64>, params: &VehicleParams) -> Wrench {
    let g = mixing_matrix(params) * omega_sq;
    Wrench::from_thrust_torque(g[0], Vector3::new(g[1], g[2], g[3]))
}

pub fn inverse_mixer(wrench: &Wrench, params: &VehicleParams) -> Result<PropellerSpeeds> {
    let inv = mixing_matrix(params).try_inverse().ok_or_else(|| Error::Config("singular mixing matrix".into()))?;
    let t = wrench.body_torque;
    let omega_sq = inv * Vector4::new(wrench.thrust(), t.x, t.y, t.z);
    // Absorb round-off around exact zero before the sign test.
    let scale = omega_sq.amax().max(1.0);
    let max = params.max_omega_sq();
    let mut out = omega_sq;
    for (rotor, value) in omega_sq.iter().enumerate() {
        if *value < -1e-12 * scale || *value > max * (1.0 + 1e-12) {
            return Err(Error::InfeasibleWrench { rotor, value: *value });
        }
        out[rotor] = value.clamp(0.0, max);
    }
    Ok(PropellerSpeeds::new(out))
}

/// Euler-rate transformation `T` with `euler_dot = T * body_rates`.
pub fn euler_rate_matrix(roll: f64, pitch: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (tp, cp) = (pitch.tan(), pitch.cos());
    Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp)
}

fn check_pitch(pitch: f64) -> Result<()> {
    if !pitch.is_finite() || pitch.abs() >= FRAC_PI_2 - PITCH_GUARD {
        Err(Error::Singularity { pitch })
    } else {
        Ok(())
    }
}

fn accelerations(x: &StateVector, wrench: &Wrench, params: &VehicleParams) -> StateVector {
    let euler = Vector3::new(x[6], x[7], x[8]);
    let w = Vector3::new(x[9], x[10], x[11]);
    let inertia = params.inertia_vector();
    let acc = params.gravity_vector() + rotation_zyx(&euler) * wrench.body_force / params.mass;
    let euler_dot = euler_rate_matrix(euler.x, euler.y) * w;
    let ang_acc = (wrench.body_torque - w.cross(&inertia.component_mul(&w))).component_div(&inertia);
    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
    dx.fixed_rows_mut::<3>(3).copy_from(&acc);
    dx.fixed_rows_mut::<3>(6).copy_from(&euler_dot);
    dx.fixed_rows_mut::<3>(9).copy_from(&ang_acc);
    dx
}

/// Continuous-time state derivative under a constant body wrench.
pub fn dynamics_deriv(state: &VehicleState, wrench: &Wrench, params: &VehicleParams) -> Result<StateVector> {
    check_pitch(state.euler.y)?;
    Ok(accelerations(&state.to_vector(), wrench, params))
}

/// State derivative with its Jacobians with respect to the state and the
/// squared rotor speeds.
pub fn dynamics_jacobian(
    x: &StateVector,
    omega_sq: &Vector4<f64>,
    params: &VehicleParams,
) -> Result<(StateVector, StateJacobian, InputJacobian)> {
    check_pitch(x[7])?;
    let mix = mixing_matrix(params);
    let wrench = mix_unchecked(omega_sq, params);
    let f = accelerations(x, &wrench, params);

    let euler = Vector3::new(x[6], x[7], x[8]);
    let w = Vector3::new(x[9], x[10], x[11]);
    let inertia = params.inertia_vector();
    let (roll, pitch) = (euler.x, euler.y);

    let mut a = StateJacobian::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());

    let partials = rotation_zyx_partials(&euler);
    for (j, dr) in partials.iter().enumerate() {
        let col = dr * wrench.body_force / params.mass;
        a.fixed_view_mut::<3, 1>(3, 6 + j).copy_from(&col);
    }

    let (sr, cr) = roll.sin_cos();
    let (tp, cp) = (pitch.tan(), pitch.cos());
    let sec2 = 1.0 / (cp * cp);
    let dt_droll = Matrix3::new(0.0, cr * tp, -sr * tp, 0.0, -sr, -cr, 0.0, cr / cp, -sr / cp);
    let dt_dpitch = Matrix3::new(0.0, sr * sec2, cr * sec2, 0.0, 0.0, 0.0, 0.0, sr * tp / cp, cr * tp / cp);
    a.fixed_view_mut::<3, 1>(6, 6).copy_from(&(dt_droll * w));
    a.fixed_view_mut::<3, 1>(6, 7).copy_from(&(dt_dpitch * w));
    a.fixed_view_mut::<3, 3>(6, 9).copy_from(&euler_rate_matrix(roll, pitch));

    let i_mat = Matrix3::from_diagonal(&inertia);
    let i_inv = Matrix3::from_diagonal(&inertia.map(|v| 1.0 / v));
    let gyro = skew(&w) * i_mat - skew(&(i_mat * w));
    a.fixed_view_mut::<3, 3>(9, 9).copy_from(&(-i_inv * gyro));

    let mut b = InputJacobian::zeros();
    let r = rotation_zyx(&euler);
    let thrust_dir = r * Vector3::new(0.0, 0.0, -1.0) / params.mass;
    for i in 0..INPUT_DIM {
        b.fixed_view_mut::<3, 1>(3, i).copy_from(&(thrust_dir * mix[(0, i)]));
        let torque = Vector3::new(mix[(1, i)], mix[(2, i)], mix[(3, i)]);
        b.fixed_view_mut::<3, 1>(9, i).copy_from(&i_inv.diagonal().component_mul(&torque));
    }
    Ok((f, a, b))
}

fn wrap_euler(x: &mut StateVector) {
    for i in 6..9 {
        x[i] = wrap_angle(x[i]);
    }
}

fn ensure_finite(x: &StateVector) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("RK4 integration"))
    }
}

/// One classical RK4 step with the rotor speeds held constant.
pub fn rk4_step(
    state: &VehicleState,
    speeds: &PropellerSpeeds,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("integration step must be positive, got {dt}")));
    }
    let wrench = mix_unchecked(&speeds.omega_sq, params);
    let x = state.to_vector();
    let deriv = |x: &StateVector| -> Result<StateVector> {
        check_pitch(x[7])?;
        ensure_finite(x)?;
        Ok(accelerations(x, &wrench, params))
    };
    let k1 = deriv(&x)?;
    let k2 = deriv(&(x + k1 * (dt / 2.0)))?;
    let k3 = deriv(&(x + k2 * (dt / 2.0)))?;
    let k4 = deriv(&(x + k3 * dt))?;
    let mut next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    ensure_finite(&next)?;
    wrap_euler(&mut next);
    Ok(VehicleState::from_vector(&next))
}

/// RK4 step together with the exact derivative of the discrete map with
/// respect to the initial state and the squared rotor speeds.
pub fn rk4_step_with_sensitivities(
    x: &StateVector,
    omega_sq: &Vector4<f64>,
    params: &VehicleParams,
    dt: f64,
) -> Result<(StateVector, StateJacobian, InputJacobian)> {
    ensure_finite(x)?;
    let h = dt;
    let (k1, a1, b1) = dynamics_jacobian(x, omega_sq, params)?;
    let dk1x = a1;
    let dk1u = b1;

    let x2 = x + k1 * (h / 2.0);
    let (k2, a2, b2) = dynamics_jacobian(&x2, omega_sq, params)?;
    let dk2x = a2 * (StateJacobian::identity() + dk1x * (h / 2.0));
    let dk2u = a2 * dk1u * (h / 2.0) + b2;

    let x3 = x + k2 * (h / 2.0);
    let (k3, a3, b3) = dynamics_jacobian(&x3, omega_sq, params)?;
    let dk3x = a3 * (StateJacobian::identity() + dk2x * (h / 2.0));
    let dk3u = a3 * dk2u * (h / 2.0) + b3;

    let x4 = x + k3 * h;
    let (k4, a4, b4) = dynamics_jacobian(&x4, omega_sq, params)?;
    let dk4x = a4 * (StateJacobian::identity() + dk3x * h);
    let dk4u = a4 * dk3u * h + b4;

    let mut next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    ensure_finite(&next)?;
    wrap_euler(&mut next);
    let sx = StateJacobian::identity() + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (h / 6.0);
    let su = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (h / 6.0);
    Ok((next, sx, su))
}
