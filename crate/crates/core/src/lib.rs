//! Wireless link anomaly classification from RSSI traces.
//!
//! Traces are injected with synthetic anomalies ([`inject`]), rendered as
//! images ([`imaging`]), and classified by a small convolutional network
//! ([`nn`]) whose decisions can be inspected with saliency maps ([`explain`]).
//! [`baseline`] provides a DTW nearest-neighbour reference and [`eval`] the
//! experiment protocol.

pub mod baseline;
pub mod cli;
pub mod error;
pub mod eval;
pub mod explain;
pub mod imaging;
pub mod inject;
pub mod kv;
pub mod nn;
pub mod seed;
pub mod traces;

pub use error::{Error, Result};
pub use inject::AnomalyKind;
