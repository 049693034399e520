//! Gravity-related collapse rates of massive spatial superpositions.

pub mod error;
pub mod kernel;
pub mod mass;
pub mod planck;
pub mod quad;
pub mod quantity;
pub mod rate;
pub mod rng;
pub mod self_energy;
pub mod stochastic;
pub mod testmass;

pub use error::{Error, Result};
