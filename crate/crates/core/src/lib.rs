pub mod config;
pub mod data_io;
pub mod error;
pub mod factors;
pub mod geometry;
pub mod landmark_graph;
pub mod line_features;
pub mod loop_closure;
pub mod metrics;
pub mod occupancy;
pub mod pipeline;
pub mod pose_graph;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
