pub mod channel;
pub mod covariance;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod linkproc;
pub mod pilots;
pub mod rng;
pub mod scenario;

pub mod theory;
pub mod validation;

pub use error::{Error, Result};
