//! Quantum counterfeit-coin workbench: coin model, state simulation,
//! amplification, solvers, lower bounds and classical baselines.

pub mod amplify;
pub mod bounds;
pub mod classical;
pub mod coinmodel;
pub mod error;
pub mod numeric;
pub mod simulate;
pub mod solver;

pub use error::{QcoinError, Result};
