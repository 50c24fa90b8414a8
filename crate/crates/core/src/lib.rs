//! Two-point-measurement work statistics, single-site entanglement and density
//! correlators for sudden impurity quenches of the one-dimensional attractive
//! Hubbard model.

pub mod basis;
pub mod config;
pub mod critical;
pub mod ensemble;
pub mod error;
pub mod ground;
pub mod hamiltonian;
pub mod io;
pub mod kernel;
pub mod observables;
pub mod run;
pub mod solver;
pub mod spectra;
pub mod thermal;
pub mod validate;
pub mod workstats;
