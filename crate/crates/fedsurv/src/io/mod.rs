//! File formats and experiment drivers behind the CLI: the dataset CSV
//! schema, the flat key = value experiment config, and the drivers that
//! reproduce the improvement, event-reporting and timing studies.

mod config;
mod dataset;
mod experiment;

pub use config::{Algorithm, ClusterSpec, ExperimentConfig};
pub use dataset::{load_dataset, save_dataset};
pub use experiment::{
    paired_t_test, round_reports_csv, run_bench_sweep, run_event_experiment,
    run_improvement_experiment, EventRow, EventTable, ImprovementRow, ImprovementTable, RunDetail,
    TimingRow, TimingTable,
};
