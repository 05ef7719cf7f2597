//! Monte Carlo sweep harness: configuration parsing, seeded trial
//! orchestration and CSV results.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::{parse_config, SimConfig, SolverSettings};
pub use report::{read_csv, read_csv_from, summarize, write_csv, write_csv_to, SummaryRow};
pub use sweep::{run_sweep, trial_seed, Row, RowStatus, SweepResult};
