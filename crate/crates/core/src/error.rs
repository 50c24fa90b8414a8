use thiserror::Error;

use crate::basis::BasisError;
use crate::config::ConfigError;
use crate::ensemble::EnsembleError;
use crate::hamiltonian::HamiltonianError;
use crate::solver::SolveError;
use crate::spectra::SpectraError;
use crate::workstats::WorkError;

/// Any failure of a top-level command.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Work(#[from] WorkError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
