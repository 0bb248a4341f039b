//! Angle wrapping and the Z-Y-X rotation helpers shared by the model and the sensing chain.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub(crate) fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

pub(crate) fn drot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

pub(crate) fn drot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Body-to-earth rotation for Z-Y-X Euler angles `(roll, pitch, yaw)`.
pub fn rotation_zyx(euler: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(euler.z) * rot_y(euler.y) * rot_x(euler.x)
}

/// Partial derivatives of [`rotation_zyx`] with respect to roll, pitch and yaw.
pub(crate) fn rotation_zyx_partials(euler: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(euler.x), rot_y(euler.y), rot_z(euler.z));
    [rz * ry * drot_x(euler.x), rz * drot_y(euler.y) * rx, drot_z(euler.z) * ry * rx]
}

/// Roll/pitch-only tilt `R_y(pitch) R_x(roll)`: maps body vectors into a yaw-free level frame.
pub fn tilt(roll: f64, pitch: f64) -> Matrix3<f64> {
    rot_y(pitch) * rot_x(roll)
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a x b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_is_half_open() {
        assert!(close(wrap_angle(PI), PI, 1e-15));
        assert!(close(wrap_angle(-PI), PI, 1e-15));
        assert!(close(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-15));
        assert!(close(wrap_angle(350f64.to_radians()), -10f64.to_radians(), 1e-12));
    }

    #[test]
    fn rotation_partials_match_finite_differences() {
        let e = Vector3::new(0.3, -0.2, 1.1);
        let parts = rotation_zyx_partials(&e);
        let h = 1e-6;
        for (j, part) in parts.iter().enumerate() {
            let mut ep = e;
            let mut em = e;
            ep[j] += h;
            em[j] -= h;
            let fd = (rotation_zyx(&ep) - rotation_zyx(&em)) / (2.0 * h);
            assert!((fd - part).amax() < 1e-8);
        }
    }

    #[test]
    fn skew_is_cross_product() {
        let a = Vector3::new(1.0, -2.0, 0.5);
        let b = Vector3::new(0.3, 0.7, -1.0);
        assert!((skew(&a) * b - a.cross(&b)).amax() < 1e-15);
    }
}
