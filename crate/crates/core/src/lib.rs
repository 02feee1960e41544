//! Discriminant-gain analysis and precoder design for multi-sensor edge
//! inference with over-the-air feature aggregation.
//!
//! Sensors map real feature pairs onto complex subcarrier symbols, apply
//! transmit coefficients, and transmit simultaneously; the server combines
//! each subcarrier with a receive vector and classifies the aggregated
//! feature with a Mahalanobis classifier. [`metrics`] expresses the
//! discriminant gain of the aggregated feature in terms of the precoders,
//! [`precoding`] maximizes it, and [`simulate`] measures the resulting
//! accuracy by Monte Carlo.

pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod par;
pub mod precoding;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    AggregatedStatistics, ChannelSet, ClassStatistics, Precoders, Scheme, SensorPower,
    SweepRecord, SystemConfig,
};
