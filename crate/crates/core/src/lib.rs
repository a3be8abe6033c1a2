//! Multi-resolution contrastive representation learning and iterative
//! contrast-classify training for temporal action segmentation.

pub mod cli;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod icc;
pub mod metrics;
pub mod network;
pub mod rng;

pub use error::{Error, Result};
