//! Experiment harness: config loading, seeded training/evaluation across
//! policies, metric aggregation and CSV/JSON artifacts.

mod compare;
mod runner;
mod spec;
mod sweep;

pub use compare::{compare_dir, compare_summaries, CompareReport};
pub use runner::{run_experiment, write_outputs, CellResult, RunOutput, Summary, SummaryStat};
pub use spec::{ExperimentSpec, MetricsRow, METRICS_HEADER};
pub use sweep::{run_sweep, write_sweep_csv, SweepGrid, SweepRow, SweepSpec};
