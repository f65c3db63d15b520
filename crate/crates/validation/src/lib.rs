//! Simulation designs and brute-force reference computations used to validate `gcnet`.
//!
//! Nothing here is called by the library; each oracle is written without reference to
//! the routine it checks.

pub mod hong;
pub mod oracles;
pub mod probit;
