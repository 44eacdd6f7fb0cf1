//! Discrete-time simulator for energy-aware geofencing with directional,
//! energy-harvesting cameras.

pub mod energy;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod fgs;
pub mod geometry;
pub mod par;
pub mod policy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
