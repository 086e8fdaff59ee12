pub mod cli;
pub mod data;
pub mod error;
pub mod geometry;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod predict;
pub mod train;

pub use error::{EpnError, Result};
