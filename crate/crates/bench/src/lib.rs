//! Experiment runner for the `heston` command-line tool: configs, the
//! break-frequency, shared-noise RMS and pricing comparisons, and reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod reproduce;

pub use config::{ExperimentConfig, ExperimentKind, Overrides, PricerKind};
pub use error::BenchError;
pub use experiments::{
    run_break_frequency, run_price_comparison, run_rms, BreakTable, ComparisonRow, GainReport, PriceComparison,
    RmsReport,
};
