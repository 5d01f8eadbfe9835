//! Empirical-likelihood inference for partially linear single-index models
//! (PLSIM) and their conditionally heteroscedastic extension (CHPLSIM) on
//! stationary, weakly dependent time series.
//!
//! The test pipeline is
//! [`kernel::estimate_eta`] → [`moments::psi`] → [`el::solve_lambda`],
//! wrapped by [`el::wilks_test`]. [`simulate`] generates the experimental
//! designs and [`harness`] runs Monte Carlo rejection-rate experiments and the
//! CSV workflows behind the `plsim-el` binary.

pub mod chi2;
pub mod el;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod kernel;
pub mod moments;
pub mod nelder_mead;
pub mod par;
pub mod simulate;
pub mod types;

pub use el::{solve_lambda, wilks_test, ElResult, ElStatus, EtaInput, SolverOptions};
pub use error::{Error, Result};
pub use kernel::{estimate_eta, oracle_eta, EtaProfile, KernelConfig};
pub use moments::{psi, psi_chplsim, psi_plsim, MomentMatrix};
pub use simulate::{simulate, Innovation, Preset, SimDesign};
pub use types::{Family, Identification, ModelSpec, Series, Theta, VarianceForm};
