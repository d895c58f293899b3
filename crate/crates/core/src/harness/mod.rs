//! Experiment grid: replicated training under each (noise, train loss, n),
//! scored by testing and excess risks under every test loss.

mod config;
mod metrics;
mod plot;
mod report;
mod runner;

pub use config::{ExperimentConfig, SCHEMA_VERSION};
pub use metrics::{
    delta2_from, delta2_metric, excess_risk, mean_loss, mean_sd, median, testing_risk, Clamped, Predictor,
};
pub use plot::{emit_fit_svg, emit_trace_svg, fit_svg, trace_svg};
pub use report::{
    cell_slug, emit_csv, emit_raw_csv, parse_csv, provenance, read_report, write_outputs, CellStream, ReportRow,
    RunProvenance, REPORT_COLUMNS, REPORT_NOTE,
};
pub use runner::{
    cell_stream_key, convergence_sweep, loglog_slope, plan, replication_draw, run_cell, run_table, CellResult, FirstRep, Report,
    ReplicationDraw, RunOptions, Sweep, SweepPoint, TestLossStats,
};
