//! Shrinkage-based Shiryaev-Roberts change-point detection for multistream data.

pub mod config;
pub mod detectors;
pub mod error;
pub mod estimators;
pub mod models;
pub mod montecarlo;
pub mod normal;
pub mod report;
pub mod reproduce;

pub use error::{Error, Result};
