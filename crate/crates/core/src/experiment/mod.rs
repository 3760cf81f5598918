//! End-to-end harness: ingest a CSV, sweep privacy budgets, train the three
//! estimators on privatized training splits and score them on clean test data.

pub mod config;
pub mod ingest;
pub mod report;
pub mod surrogate;
pub mod sweep;

pub use config::KeyValues;
pub use ingest::{ingest_csv, Ingested, SchemaConfig};
pub use report::{emit_report, mean_curves};
pub use surrogate::adult_like_surrogate;
pub use sweep::{default_epsilons, run_sweep, split, Method, ResultRow, ResultsTable, SweepConfig};
