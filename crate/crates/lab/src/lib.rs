//! Experiment companion to kelp-core: Gaussian designs and knockoff
//! sampling, lasso importance statistics, the simulation scenarios with
//! their metrics, and the file formats behind the command-line interface.

pub mod cli;
pub mod files;
pub mod knockoffs;
pub mod lasso;
pub mod linalg;
pub mod simlab;
