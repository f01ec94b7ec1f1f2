pub mod config;
pub mod control;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod graybox;
pub mod haar;
pub mod linalg;
pub mod noise;
pub mod parallel;
pub mod pauli;
pub mod propagate;
pub mod pulse;
pub mod simulator;
pub mod state;
pub mod stats;
pub mod tomography;
pub mod whitebox;

pub use error::{Error, Result};
