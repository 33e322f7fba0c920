//! Multi-resolution e-value selection: hypothesis families over feature
//! partitions, relaxed e-values, the weighted self-consistent selection
//! program and its solvers, knockoff-based e-value construction, and the
//! multilayer threshold filter.
//!
//! This crate is `no_std` (with `alloc`) and holds everything that does not
//! need an RNG, a file, or a linear-algebra kernel. Data generation, knockoff
//! sampling, fitting, and the command-line front end live in the companion
//! `kelp-lab` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod elp;
pub mod evalue;
pub mod family;
pub mod kelp;

#[cfg(feature = "testing")]
pub mod testing;
