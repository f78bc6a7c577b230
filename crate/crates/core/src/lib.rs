//! Statistical engine, model formulas and intent routing for nlstat.

pub mod data;
pub mod error;
pub mod fixtures;
pub mod formula;
pub mod hops;
pub mod inference;
pub mod intent;
pub mod stats;

pub use error::{Error, Result};
