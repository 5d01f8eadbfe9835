//! Experiment harness: named hypotheses, Monte Carlo rejection rates, CSV
//! ingestion and the observed-with-error preprocessing.

pub mod config;
pub mod csv_io;
pub mod mc;
pub mod prep_ar;

pub use config::{EtaMode, ExperimentConfig, Hypothesis, TestConfig, ThetaInput};
pub use csv_io::{read_ar_csv, read_series_csv, write_series_csv};
pub use mc::{run_mc, run_table, CellRecord, RejectionReport};
pub use prep_ar::{prep_observed_ar, PreparedAr};
