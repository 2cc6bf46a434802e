//! Speech semantic communication over simulated fading channels.

pub mod baseline;
pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod speech;

pub use error::{Error, Result};
