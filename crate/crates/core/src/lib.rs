//! Toolkit for crowdsourced comparison-category-rating (CCR) speech quality
//! tests: study compilation, submission screening, CMOS scoring, comparison
//! statistics and a synthetic rater simulator.

pub mod builder;
pub mod dist;
pub mod error;
pub mod ingest;
pub mod io;
pub mod model;
pub mod report;
pub mod scoring;
pub mod screening;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
