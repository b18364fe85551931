//! Least Squares Monte Carlo valuation of liability cash flows under a
//! recursive cost-of-capital rule, with out-of-sample validation and
//! brute-force reference values.

pub mod basis;
pub mod config;
pub mod engine;
pub mod error;
pub mod io;
pub mod models;
pub mod ols;
pub mod oracle;
pub mod parallel;
pub mod risk;
pub mod rng;
pub mod validation;

pub use basis::BasisSet;
pub use engine::{lsm_backward, CoefficientTable, RunConfig, RunOutput};
pub use error::{Error, Result};
pub use models::{MarkovModel, Model, ModelState};
pub use risk::{CocParams, CocValue};
pub use validation::{validate, ValidationConfig, ValidationReport};
