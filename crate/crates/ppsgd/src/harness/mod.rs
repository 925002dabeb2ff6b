//! Experiment orchestration: configs, sweeps, and trace files.
//!
//! The harness turns a plain-text config into a grid of training runs,
//! writes the traced rows to CSV with a fixed schema, and answers the
//! queries the write-ups need (best learning rate, privacy-utility curves,
//! theory-bound tables).

pub mod config;
pub mod records;
pub mod sweep;

pub use config::{AlgorithmKind, DatasetKind, ExperimentConfig};
pub use records::{emit_csv, fmt_f64, load_csv, EpsilonReport, Flags, RunRecord, TRACE_HEADER};
pub use sweep::{
    bounds_table, metadata_f64, run_sweep, select_best_lr, tradeoff_curve, verify_epsilons,
    BoundsRow, SweepOutcome, TradeoffCurve, TradeoffPoint,
};
