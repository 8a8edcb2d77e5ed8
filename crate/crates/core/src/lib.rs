pub mod agent;
pub mod env;
pub mod graph;
pub mod harness;
pub mod nn;
pub mod replay;
