//! Certified finite-size key rates for discrete-modulated continuous-variable
//! quantum key distribution with heterodyne detection.

pub mod app;
pub mod channel;
pub mod conic;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod output;
pub mod protocol;
pub mod quad;
pub mod scenario;
pub mod solver;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
