//! Experiment harness: ROC sweeps, time-series ingestion and the grid
//! runners behind the command-line tool.

mod experiments;
mod ingest;
mod roc;

pub use experiments::{
    envelope, fit_maps, run_calibrate, run_ci_roc, run_experiment, run_mb_select, run_mi_grid, CalibrateRow,
    CiRocResult, ExperimentKind, ExperimentSpec, MbSelectRow, MiRow, RocScore, ScoredRelation, VERSION,
};
pub use ingest::{ingest_timeseries, IngestConfig, Ingested};
pub use roc::{roc_sweep, RocRow, RocTable};

#[cfg(test)]
mod tests;
