//! Run configuration, artifact formats and the command implementations
//! behind the command-line interface.

mod commands;
mod config;
pub mod io;

pub use commands::{
    cmd_diagnose, cmd_eval, cmd_reference, cmd_sweep, cmd_train, diagnose_field, evaluate_field, exit_code,
    read_history, read_metrics, snapshot, write_history, write_metrics, DiagnoseReport, SweepRow, TrainArtifacts,
    HISTORY_COLUMNS, INDICATOR_COLUMNS, ORACLE_COLUMNS, REFERENCE_COLUMNS, SWEEP_COLUMNS,
};
pub use config::{
    default_lrs, DiagnosticsSection, EvalSection, ModelSection, OutputSection, RunConfig, SweepSpec, TrainSection,
};
