//! Experiment plumbing: configuration, training, evaluation sweeps,
//! reports and the cross-train experiment.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod report;
pub mod run;
pub mod train;
