//! Experiment runner: configs, single runs, frontier sweeps and the
//! invariant suites.

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{FamilySpec, PoolSpec, RunConfig, ThresholdSpec};
pub use run::{
    metrics_csv, play, play_with, resolve_out_dir, run, MetricsRow, RunSummary, Scenario, CSV_HEADER, OUT_ENV,
};
pub use sweep::{loglog_slope, sweep, sweep_cached, write_sweep, ComparatorCache, SlopeFit, SweepPoint, SweepTable};
pub use verify::{run_suite, Check, Suite, SuiteReport};
