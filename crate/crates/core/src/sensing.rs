//! Per-horizon MPC frames and the relative range/bearing sensing chain.
//!
//! Every control step re-anchors three frames on each vehicle: an inertial
//! MPC frame `{mi}` at the vehicle's current position with its current yaw
//! (roll and pitch shared with the earth frame), the body frame `{mb}`, and a
//! control frame `{mc}` that follows the body position and yaw but stays
//! level. Nothing here needs an absolute yaw: the rotation between two
//! vehicles' `{mi}` frames is recovered from their mutual range/bearing
//! measurements plus IMU roll and pitch.

use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
use crate::math::{rot_z, tilt, wrap_angle};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Pose of a vehicle's inertial MPC frame relative to the earth frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FramePose {
    pub origin_offset: Vector3<f64>,
    pub yaw_offset: f64,
}

/// Range, azimuth and elevation of `target` in the body frame of `observer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMeasurement {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub observer: usize,
    pub target: usize,
}

/// IMU-provided absolute roll and pitch. Yaw is not observable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudePartial {
    pub roll: f64,
    pub pitch: f64,
}

/// How vehicle `j`'s inertial MPC frame sits inside vehicle `i`'s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameLink {
    /// Origin of `{mi_j}` relative to `{mi_i}`, expressed in `{mi_i}`.
    pub offset: Vector3<f64>,
    /// Yaw of `{mi_j}` relative to `{mi_i}`.
    pub rel_yaw: f64,
}

/// Leader position, velocity and yaw in the earth frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalLeaderState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
}

pub fn displacement_from_measurement(meas: &RelativeMeasurement) -> Vector3<f64> {
    let (sa, ca) = meas.azimuth.sin_cos();
    let (sb, cb) = meas.elevation.sin_cos();
    meas.range * Vector3::new(cb * ca, cb * sa, sb)
}

fn measurement_from_vector(v: &Vector3<f64>, observer: usize, target: usize) -> Result<RelativeMeasurement> {
    let range = v.norm();
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::DegenerateGeometry);
    }
    Ok(RelativeMeasurement {
        range,
        azimuth: wrap_angle(v.y.atan2(v.x)),
        elevation: (v.z / range).clamp(-1.0, 1.0).asin(),
        observer,
        target,
    })
}

/// Synthesizes a range/bearing reading from a true body-frame displacement.
///
/// Gaussian noise of `noise_std` meters is added per Cartesian axis before the
/// spherical coordinates are extracted.
pub fn measurement_from_geometry<R: Rng + ?Sized>(
    displacement_body: &Vector3<f64>,
    noise_std: f64,
    rng: &mut R,
    observer: usize,
    target: usize,
) -> Result<RelativeMeasurement> {
    if !(displacement_body.norm() > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let mut v = *displacement_body;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?;
        for k in 0..3 {
            v[k] += normal.sample(rng);
        }
    }
    measurement_from_vector(&v, observer, target)
}

fn horizontal_ok(v: &Vector3<f64>) -> bool {
    v.x.hypot(v.y) > 1e-6 * v.norm().max(f64::MIN_POSITIVE)
}

/// Estimates `yaw_1 - yaw_2` from the mutual measurements of two vehicles.
///
/// `meas_12` is vehicle 2 as seen by vehicle 1 and `meas_21` the reverse.
pub fn relative_yaw_estimate(
    meas_12: &RelativeMeasurement,
    meas_21: &RelativeMeasurement,
    att_1: &AttitudePartial,
    att_2: &AttitudePartial,
) -> Result<f64> {
    if meas_12.observer != meas_21.target || meas_12.target != meas_21.observer {
        return Err(Error::Dimension(format!(
            "measurements {}->{} and {}->{} are not a mutual pair",
            meas_12.observer, meas_12.target, meas_21.observer, meas_21.target
        )));
    }
    let b = tilt(att_1.roll, att_1.pitch) * displacement_from_measurement(meas_12);
    let a = -(tilt(att_2.roll, att_2.pitch) * displacement_from_measurement(meas_21));
    if !horizontal_ok(&a) || !horizontal_ok(&b) {
        return Err(Error::IllConditionedGeometry(meas_12.observer, meas_12.target));
    }
    Ok(wrap_angle((a.y * b.x - a.x * b.y).atan2(a.x * b.x + a.y * b.y)))
}

/// Builds the frame link from `i` to `j` out of both vehicles' readings.
pub fn frame_link(
    meas_ij: &RelativeMeasurement,
    meas_ji: &RelativeMeasurement,
    att_i: &AttitudePartial,
    att_j: &AttitudePartial,
) -> Result<FrameLink> {
    let offset = tilt(att_i.roll, att_i.pitch) * displacement_from_measurement(meas_ij);
    let rel_yaw = relative_yaw_estimate(meas_ji, meas_ij, att_j, att_i)?;
    Ok(FrameLink { offset, rel_yaw })
}

/// Displacement of `j` from `i` in `i`'s control frame, both states being
/// expressed in their own inertial MPC frames.
pub fn relative_displacement_control_frame(
    state_i: &VehicleState,
    state_j: &VehicleState,
    link: &FrameLink,
) -> Vector3<f64> {
    let in_mi_i = rot_z(link.rel_yaw) * state_j.position + link.offset - state_i.position;
    rot_z(-state_i.yaw()) * in_mi_i
}

pub fn leader_global_states(state: &VehicleState, frame: &FramePose) -> GlobalLeaderState {
    let r = rot_z(frame.yaw_offset);
    GlobalLeaderState {
        position: r * state.position + frame.origin_offset,
        velocity: r * state.velocity,
        yaw: wrap_angle(state.yaw() + frame.yaw_offset),
    }
}

/// Field-of-view half-angles of the relative sensor, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOfView {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Default for FieldOfView {
    fn default() -> Self {
        Self { azimuth: 60f64.to_radians(), elevation: 45f64.to_radians() }
    }
}

impl FieldOfView {
    /// Whether a target at `actual` stays inside a sensor boresighted on `nominal`.
    pub fn contains(&self, nominal: &Vector3<f64>, actual: &Vector3<f64>) -> bool {
        let (Ok(n), Ok(a)) = (measurement_from_vector(nominal, 0, 0), measurement_from_vector(actual, 0, 0)) else {
            return false;
        };
        wrap_angle(a.azimuth - n.azimuth).abs() <= self.azimuth && (a.elevation - n.elevation).abs() <= self.elevation
    }
}
