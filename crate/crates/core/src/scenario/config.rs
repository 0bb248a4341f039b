use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::ocp::{FormationEdge, FormationGraph, Weights};
use crate::sensing::FieldOfView;
use crate::solver::{Budget, RtiOptions, SqpOptions};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub formation: f64,
    pub position: f64,
    pub yaw: f64,
    pub input: f64,
    /// Multiplies `input` for both the force and the torque terms.
    pub input_scale: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { formation: 10.0, position: 1.0, yaw: 1.0, input: 1.0, input_scale: 1e-1 }
    }
}

impl WeightConfig {
    pub fn weights(&self) -> Weights {
        Weights {
            formation: self.formation,
            position: self.position,
            yaw: self.yaw,
            force: self.input * self.input_scale,
            torque: self.input * self.input_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub arm_length: f64,
    pub hover_rpm: f64,
    pub max_rpm: f64,
    pub torque_to_thrust: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            mass: 0.5,
            inertia: [2.5e-3, 2.5e-3, 5.0e-3],
            arm_length: 0.18,
            hover_rpm: 3000.0,
            max_rpm: 6000.0,
            torque_to_thrust: 0.016,
        }
    }
}

impl VehicleConfig {
    pub fn params(&self) -> VehicleParams {
        VehicleParams::from_hover(
            self.mass,
            self.inertia,
            self.arm_length,
            self.hover_rpm,
            self.max_rpm,
            self.torque_to_thrust,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationConfig {
    /// Vehicle 0 is the leader.
    pub vehicles: usize,
    pub edges: Vec<FormationEdge>,
    /// Same edges, in the same order, with the references used from segment D on.
    pub updated: Vec<FormationEdge>,
    /// Initial earth-frame displacement of each vehicle from its formation slot.
    pub initial_offsets: Vec<[f64; 3]>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        let e = |observer, target, desired| FormationEdge { observer, target, desired };
        Self {
            vehicles: 3,
            edges: vec![e(0, 1, [-1.0, -0.5, -0.5]), e(0, 2, [-1.0, 0.5, -0.5]), e(2, 1, [0.0, -1.0, 0.0])],
            updated: vec![e(0, 1, [-1.0, -0.75, -0.5]), e(0, 2, [-1.0, 0.75, -0.5]), e(2, 1, [0.0, -1.5, 0.0])],
            initial_offsets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Leader absolute position, m.
    pub abs_position: f64,
    /// Leader absolute yaw, rad.
    pub abs_yaw: f64,
    /// m/s
    pub optic_flow: f64,
    /// Roll/pitch, degrees.
    pub imu_euler_deg: f64,
    /// deg/s
    pub gyro_deg_s: f64,
    /// Per-axis relative localization, m.
    pub relative: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            abs_position: 0.02,
            abs_yaw: 0.02,
            optic_flow: 0.25,
            imu_euler_deg: 0.005,
            gyro_deg_s: 3.0,
            relative: 0.025,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self { abs_position: 0.0, abs_yaw: 0.0, optic_flow: 0.0, imu_euler_deg: 0.0, gyro_deg_s: 0.0, relative: 0.0 }
    }
}

/// Relative standard deviations of the prediction-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Uncertainty {
    pub mass_std: f64,
    pub inertia_std: f64,
}

impl Default for Uncertainty {
    fn default() -> Self {
        Self { mass_std: 0.01, inertia_std: 0.05 }
    }
}

impl Uncertainty {
    pub fn none() -> Self {
        Self { mass_std: 0.0, inertia_std: 0.0 }
    }
}

/// Segment durations in seconds; a zero duration skips the segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub hold: f64,
    pub line: f64,
    pub turn: f64,
    pub regenerate: f64,
    pub spiral: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { hold: 1.0, line: 5.0, turn: 3.0, regenerate: 5.0, spiral: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Hold,
    Line,
    Turn,
    Regenerate,
    Spiral,
}

impl Segment {
    pub const ALL: [Segment; 5] = [Segment::Hold, Segment::Line, Segment::Turn, Segment::Regenerate, Segment::Spiral];

    pub fn letter(self) -> char {
        match self {
            Segment::Hold => 'A',
            Segment::Line => 'B',
            Segment::Turn => 'C',
            Segment::Regenerate => 'D',
            Segment::Spiral => 'E',
        }
    }
}

impl Schedule {
    pub fn durations(&self) -> [f64; 5] {
        [self.hold, self.line, self.turn, self.regenerate, self.spiral]
    }

    pub fn start_of(&self, segment: Segment) -> f64 {
        self.durations()[..segment as usize].iter().sum()
    }

    pub fn end_of(&self, segment: Segment) -> f64 {
        self.start_of(segment) + self.durations()[segment as usize]
    }

    pub fn end(&self) -> f64 {
        self.durations().iter().sum()
    }

    /// Segment active at `t`; the final instant belongs to the last non-empty segment.
    pub fn segment_at(&self, t: f64) -> Option<Segment> {
        if !(0.0..=self.end()).contains(&t) {
            return None;
        }
        let mut last = None;
        for s in Segment::ALL {
            if self.durations()[s as usize] <= 0.0 {
                continue;
            }
            last = Some(s);
            if t < self.end_of(s) {
                return Some(s);
            }
        }
        last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub start: [f64; 3],
    pub start_yaw_deg: f64,
    /// m/s along segments B and D.
    pub line_speed: f64,
    pub turn_angle_deg: f64,
    /// Seconds over which the heading change of segment C is spread.
    pub turn_window: f64,
    /// Tangential speed of the helix, m/s.
    pub spiral_speed: f64,
    pub spiral_radius: f64,
    /// Climb rate of the helix, m/s (upwards).
    pub spiral_climb_rate: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0, -2.0],
            start_yaw_deg: 0.0,
            line_speed: 2.0,
            turn_angle_deg: 90.0,
            turn_window: 1.5,
            spiral_speed: 1.9,
            spiral_radius: 2.0,
            spiral_climb_rate: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub initial_kkt: f64,
    pub running_kkt: f64,
    pub first_max_iters: usize,
    pub qp_max_iters: usize,
    pub levenberg: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let rti = RtiOptions::default();
        Self {
            initial_kkt: rti.initial_kkt,
            running_kkt: rti.running_kkt,
            first_max_iters: rti.first_max_iters,
            qp_max_iters: rti.sqp.qp_max_iters,
            levenberg: rti.sqp.levenberg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FovConfig {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Default for FovConfig {
    fn default() -> Self {
        Self { azimuth_deg: 60.0, elevation_deg: 45.0 }
    }
}

/// Complete description of a simulation campaign. Every field has a default,
/// so an empty TOML document reproduces the nominal five-segment scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Plant and control sample time, s.
    pub dt: f64,
    pub horizon: usize,
    pub weights: WeightConfig,
    pub vehicle: VehicleConfig,
    pub formation: FormationConfig,
    pub noise: NoiseConfig,
    pub uncertainty: Uncertainty,
    pub schedule: Schedule,
    pub trajectory: TrajectoryConfig,
    pub solver: SolverConfig,
    pub fov: FovConfig,
    pub runs: usize,
    pub seed: u64,
    pub output_dir: String,
    pub warm_start: bool,
    /// Fixed SQP iteration count replacing the wall-clock budget.
    pub test_mode: Option<usize>,
    /// Time after each segment start excluded from steady-state statistics, s.
    pub settle_time: f64,
    /// Any state component above this magnitude aborts the run.
    pub divergence_limit: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 15,
            weights: WeightConfig::default(),
            vehicle: VehicleConfig::default(),
            formation: FormationConfig::default(),
            noise: NoiseConfig::default(),
            uncertainty: Uncertainty::default(),
            schedule: Schedule::default(),
            trajectory: TrajectoryConfig::default(),
            solver: SolverConfig::default(),
            fov: FovConfig::default(),
            runs: 10,
            seed: 1,
            output_dir: "out".into(),
            warm_start: true,
            test_mode: None,
            settle_time: 2.0,
            divergence_limit: 1e4,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn graph(&self) -> FormationGraph {
        FormationGraph::from_edges(&self.formation.edges)
    }

    pub fn updated_graph(&self) -> FormationGraph {
        FormationGraph::from_edges(&self.formation.updated)
    }

    pub fn fov(&self) -> FieldOfView {
        FieldOfView { azimuth: self.fov.azimuth_deg.to_radians(), elevation: self.fov.elevation_deg.to_radians() }
    }

    pub fn rti_options(&self) -> RtiOptions {
        RtiOptions {
            budget: match self.test_mode {
                Some(n) => Budget::Iterations(n.max(1)),
                None => Budget::WallClock { sample_time: self.dt },
            },
            initial_kkt: self.solver.initial_kkt,
            running_kkt: self.solver.running_kkt,
            first_max_iters: self.solver.first_max_iters,
            sqp: SqpOptions { qp_max_iters: self.solver.qp_max_iters, levenberg: self.solver.levenberg },
        }
    }

    /// Number of control steps covering the schedule.
    pub fn steps(&self) -> usize {
        (self.schedule.end() / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one stage".into());
        }
        if self.runs == 0 {
            return bad("run count must be at least one".into());
        }
        if self.schedule.durations().iter().any(|d| !(d.is_finite() && *d >= 0.0)) || self.schedule.end() <= 0.0 {
            return bad(format!("segment durations must be nonnegative with a positive total: {:?}", self.schedule));
        }
        self.vehicle.params().validate()?;
        if self.vehicle.hover_rpm >= self.vehicle.max_rpm {
            return bad("hover speed must be below the rotor limit".into());
        }
        self.weights.weights().validate()?;
        let n = self.formation.vehicles;
        if n < 2 {
            return bad("a formation needs at least two vehicles".into());
        }
        self.graph().validate(n)?;
        self.updated_graph().validate(n)?;
        let same_pairs = self.formation.edges.len() == self.formation.updated.len()
            && self
                .formation
                .edges
                .iter()
                .zip(&self.formation.updated)
                .all(|(a, b)| a.observer == b.observer && a.target == b.target);
        if !same_pairs {
            return bad("updated formation must list the same edges in the same order".into());
        }
        if !self.formation.initial_offsets.is_empty() && self.formation.initial_offsets.len() != n {
            return bad(format!("{} initial offsets for {n} vehicles", self.formation.initial_offsets.len()));
        }
        let noise = [
            self.noise.abs_position,
            self.noise.abs_yaw,
            self.noise.optic_flow,
            self.noise.imu_euler_deg,
            self.noise.gyro_deg_s,
            self.noise.relative,
            self.uncertainty.mass_std,
            self.uncertainty.inertia_std,
        ];
        if noise.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise and uncertainty standard deviations must be nonnegative".into());
        }
        let tr = &self.trajectory;
        if !(tr.turn_window > 0.0) || !(tr.spiral_radius > 0.0) || tr.spiral_speed <= tr.spiral_climb_rate.abs() {
            return bad(
                "trajectory needs a positive turn window and radius, and a spiral speed above its climb rate".into()
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.steps(), 440);
    }

    #[test]
    fn roundtrips_through_toml() {
        let mut cfg = ScenarioConfig { test_mode: Some(2), ..Default::default() };
        cfg.schedule.spiral = 0.0;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_override() {
        let cfg = ScenarioConfig::from_toml_str("seed = 7\n[schedule]\nline = 2.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.schedule.line, 2.0);
        assert_eq!(cfg.schedule.hold, 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_toml_str("runs = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("unknown_key = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("[schedule]\nhold = -1.0").is_err());
    }

    #[test]
    fn segment_lookup() {
        let s = Schedule::default();
        assert_eq!(s.segment_at(0.0), Some(Segment::Hold));
        assert_eq!(s.segment_at(1.0), Some(Segment::Line));
        assert_eq!(s.segment_at(6.5), Some(Segment::Turn));
        assert_eq!(s.segment_at(22.0), Some(Segment::Spiral));
        assert_eq!(s.segment_at(22.1), None);
        let only_hold = Schedule { hold: 10.0, line: 0.0, turn: 0.0, regenerate: 0.0, spiral: 0.0 };
        assert_eq!(only_hold.segment_at(10.0), Some(Segment::Hold));
    }
}
