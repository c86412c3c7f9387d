pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod crf_proposal;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod maxflow;
pub mod metrics;
pub mod network;
pub mod report;
pub mod seg;
pub mod size_proposal;
pub mod trainer;

pub use error::{Error, Result};
