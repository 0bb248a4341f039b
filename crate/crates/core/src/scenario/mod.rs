//! Scripted closed-loop scenario: leader reference generation, noisy sensing,
//! plant/model mismatch, multi-run statistics and CSV output.

mod config;
mod output;
mod sim;
mod stats;
mod trajectory;

pub use config::{
    FormationConfig, FovConfig, NoiseConfig, ScenarioConfig, Schedule, Segment, SolverConfig, TrajectoryConfig,
    Uncertainty, VehicleConfig, WeightConfig,
};
pub use output::{format_number, write_aggregate, write_summary, write_table};
pub use sim::{perturb_model_params, simulate_run, simulate_run_partial, RunLog, StepRecord};
pub use stats::{
    aggregate_runs, aggregate_tables, mean_std, run_table, segment_summaries, steady_window, Aggregate, MetricTable,
    SegmentSummary,
};
pub use trajectory::{horizon_references, reference_at, uses_updated_formation, TrajectoryPoint};
