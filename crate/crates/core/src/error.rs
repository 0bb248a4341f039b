use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rotor {rotor}: squared speed {value} outside [0, {max}]")]
    RotorOutOfBounds { rotor: usize, value: f64, max: f64 },

    #[error("infeasible wrench: rotor {rotor} would need squared speed {value}")]
    InfeasibleWrench { rotor: usize, value: f64 },

    #[error("pitch {pitch} rad reaches the Euler-rate singularity guard")]
    Singularity { pitch: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate geometry: zero relative displacement")]
    DegenerateGeometry,

    #[error("ill-conditioned geometry: vehicles {0} and {1} are vertically aligned")]
    IllConditionedGeometry(usize, usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing relative measurement from vehicle {observer} to vehicle {target}")]
    SensingGap { observer: usize, target: usize },

    #[error("time {t} s outside the scenario schedule [0, {end}] s")]
    Schedule { t: f64, end: f64 },

    #[error("aggregation: {0}")]
    Aggregation(String),

    #[error("plant diverged at t = {t} s (vehicle {vehicle})")]
    Divergence { t: f64, vehicle: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
