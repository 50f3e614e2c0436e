//! Temporal knowledge graph extrapolation with two collaborating graph views:
//! a timestamp-free view of a query's own history and a rule-guided view of
//! recent, time-stamped evidence.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod history;
pub mod model;
pub mod rules;
pub mod synth;
pub mod train;
pub mod workspace;

pub use error::{CoreError, ErrorCategory, Result};
