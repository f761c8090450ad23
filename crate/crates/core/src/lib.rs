//! Main and spillover effect estimation for observational data on a known
//! network, using individual, neighborhood and joint propensity scores.

pub mod data;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod graph;
pub mod propensity;
pub mod bias;
pub mod simgen;
pub mod inference;
pub mod io;

pub use data::UnitData;
pub use error::{Error, Result};
