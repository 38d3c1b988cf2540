//! Indoor walking-path tracking from WiFi reflection-length change rates
//! fused with acoustic time-difference-of-flight.

pub mod acoustic;
pub mod baseline;
pub mod error;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod fusion;
pub mod geometry;
pub mod search;
pub mod seed;
pub mod trajectory;
pub mod wifi;

pub use error::{Error, Result};
