//! Experiment orchestration: configs, seeded runs, sweeps, planning and
//! Monte Carlo validation of the failure bounds.

mod bounds;
mod config;
mod plan;
mod run;
mod sweep;

pub use bounds::{
    validate_bounds, validation_table, BoundTuple, BoundsGrid, McCheck, TupleReport, ValidationReport,
    MIN_SAMPLES, SIGMA_TOLERANCE,
};
pub use config::{AlgorithmConfig, CorruptionConfig, ProblemConfig, RunConfig, CONFIG_VERSION};
pub use plan::{plan_table, PlanConfig};
pub use run::{
    metrics_csv, run_experiment, states_csv, write_outputs, MetricRow, RunOutput, RunSummary,
    METRICS_HEADER, TAIL_FRACTION,
};
pub use sweep::{
    mean_std, merge_patch, run_sweep, sweep_csv, SweepAxis, SweepCell, SweepGrid, SweepReport, SweepRow,
    SweepRun, SweepVariant, SWEEP_HEADER,
};
