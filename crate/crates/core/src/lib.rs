//! Partitioned implicit neural representations.

pub mod autodiff;
pub mod check;
pub mod cli;
pub mod config;
pub mod error;
pub mod hypothesis;
pub mod image;
pub mod meta;
pub mod models;
pub mod partition;
pub mod spectra;
pub mod trainer;

pub use error::{Error, Result};
