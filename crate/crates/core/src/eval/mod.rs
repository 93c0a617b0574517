//! Evaluation against the RDO oracle, uncertain-zone sweeps, timing,
//! reference-table checks and depth-correlation analysis.

mod bench;
mod depth;
mod report;
mod sweep;
mod tables;

pub use bench::{cmd_bench, BenchReport, TimingStat};
pub use depth::{cmd_depth_corr, DepthCorrQp, DepthCorrReport};
pub use report::{apply_early_term, cmd_eval, EvalContext, EvalReport, Predictor, Summary, Timing, REPORT_SCHEMA};
pub use sweep::{
    cmd_sweep, monotonicity_violations, read_sweep_csv, sweep_rows, write_sweep_csv, SweepPoint, SweepReport, SweepRow,
};
pub use tables::{verify_tables, CellCheck, TableReport, CNN_TABLE, CNN_TOTAL, LSTM_TABLE, LSTM_TOTAL};
