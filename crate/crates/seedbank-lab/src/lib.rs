pub mod config;
pub mod ctmc;
pub mod dichotomy;
pub mod dual;
pub mod duality;
pub mod error;
pub mod forward;
pub mod ibm;
pub mod lattice;
pub mod quadrature;
pub mod rng;
pub mod run;
pub mod seedbank;
pub mod stats;
pub mod system;

pub use error::{Error, Result};
