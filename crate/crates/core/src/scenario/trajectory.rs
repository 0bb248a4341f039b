use super::config::{ScenarioConfig, Segment};
use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::ocp::StageReference;
use nalgebra::Vector3;

/// Leader reference at one instant, earth frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
}

fn heading(yaw: f64) -> Vector3<f64> {
    Vector3::new(yaw.cos(), yaw.sin(), 0.0)
}

/// Motion of `segment` at local time `tau`, starting from `start`.
fn within(cfg: &ScenarioConfig, segment: Segment, start: &TrajectoryPoint, tau: f64) -> TrajectoryPoint {
    let tr = &cfg.trajectory;
    let p0 = start.position;
    let psi0 = start.yaw;
    let straight = |psi: f64, from: Vector3<f64>, dt: f64| TrajectoryPoint {
        position: from + tr.line_speed * dt * heading(psi),
        velocity: tr.line_speed * heading(psi),
        yaw: wrap_angle(psi),
    };
    match segment {
        Segment::Hold => TrajectoryPoint { position: p0, velocity: Vector3::zeros(), yaw: psi0 },
        Segment::Line | Segment::Regenerate => straight(psi0, p0, tau),
        Segment::Turn => {
            let turn = tr.turn_angle_deg.to_radians();
            let rate = turn / tr.turn_window;
            let arc = |s: f64| -> Vector3<f64> {
                if rate.abs() < 1e-12 {
                    return tr.line_speed * s * heading(psi0);
                }
                let psi = psi0 + rate * s;
                (tr.line_speed / rate) * Vector3::new(psi.sin() - psi0.sin(), psi0.cos() - psi.cos(), 0.0)
            };
            if tau <= tr.turn_window {
                let psi = psi0 + rate * tau;
                TrajectoryPoint {
                    position: p0 + arc(tau),
                    velocity: tr.line_speed * heading(psi),
                    yaw: wrap_angle(psi),
                }
            } else {
                straight(psi0 + turn, p0 + arc(tr.turn_window), tau - tr.turn_window)
            }
        }
        Segment::Spiral => {
            let climb = tr.spiral_climb_rate;
            let v_h = (tr.spiral_speed * tr.spiral_speed - climb * climb).sqrt();
            let omega = v_h / tr.spiral_radius;
            let psi = psi0 + omega * tau;
            let r = tr.spiral_radius;
            TrajectoryPoint {
                position: p0 + Vector3::new(r * (psi.sin() - psi0.sin()), r * (psi0.cos() - psi.cos()), -climb * tau),
                velocity: Vector3::new(v_h * psi.cos(), v_h * psi.sin(), -climb),
                yaw: wrap_angle(psi),
            }
        }
    }
}

/// Reference at any time; before zero it holds the start pose and after the
/// schedule end the last segment's motion continues.
fn evaluate(cfg: &ScenarioConfig, t: f64) -> TrajectoryPoint {
    let tr = &cfg.trajectory;
    let mut state = TrajectoryPoint {
        position: Vector3::from(tr.start),
        velocity: Vector3::zeros(),
        yaw: wrap_angle(tr.start_yaw_deg.to_radians()),
    };
    let durations = cfg.schedule.durations();
    let last = Segment::ALL.iter().rposition(|s| durations[*s as usize] > 0.0);
    let mut t0 = 0.0;
    for (idx, &segment) in Segment::ALL.iter().enumerate() {
        let d = durations[segment as usize];
        if d <= 0.0 {
            continue;
        }
        let tau = (t - t0).max(0.0);
        if tau < d || Some(idx) == last {
            return within(cfg, segment, &state, tau);
        }
        state = within(cfg, segment, &state, d);
        t0 += d;
    }
    state
}

/// Leader reference for `t` within the schedule.
pub fn reference_at(t: f64, cfg: &ScenarioConfig) -> Result<TrajectoryPoint> {
    let end = cfg.schedule.end();
    if !(t >= 0.0 && t <= end + 1e-12) {
        return Err(Error::Schedule { t, end });
    }
    Ok(evaluate(cfg, t))
}

/// Whether the updated formation references apply at `t`.
pub fn uses_updated_formation(t: f64, cfg: &ScenarioConfig) -> bool {
    let switch = cfg.schedule.start_of(Segment::Regenerate);
    switch < cfg.schedule.end() && t >= switch
}

/// Stage references over a horizon starting at `t`, previewing past the
/// schedule end by extrapolation.
pub fn horizon_references(t: f64, cfg: &ScenarioConfig) -> Vec<StageReference> {
    let nominal = cfg.graph().desired();
    let updated = cfg.updated_graph().desired();
    (0..=cfg.horizon)
        .map(|k| {
            let tk = t + k as f64 * cfg.dt;
            let p = evaluate(cfg, tk);
            StageReference {
                formation: if uses_updated_formation(tk, cfg) { updated.clone() } else { nominal.clone() },
                leader_position: p.position,
                leader_yaw: p.yaw,
            }
        })
        .collect()
}
