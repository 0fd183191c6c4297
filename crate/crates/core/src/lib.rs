//! Online scheduling and routing of automated guided vehicles on loop-based
//! plant graphs.

pub mod exact;
pub mod graph;
pub mod heuristics;
pub mod instance;
pub mod rng;
pub mod solution;
pub mod simulator;
pub mod tabu;
