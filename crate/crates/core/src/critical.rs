//! The product state with every impurity site doubly occupied and all other
//! sites empty, and the closed-form work moments of quenches out of it.

use thiserror::Error;

use crate::basis::{Determinant, SectorBasis};
use crate::hamiltonian::{ImpurityConfig, PotentialDelta};
use crate::workstats::MomentSet;

#[derive(Debug, Error, PartialEq)]
pub enum CriticalError {
    #[error("{impurities} impurities cannot host ({n_up}, {n_dn}) fermions as local pairs")]
    SectorMismatch { impurities: usize, n_up: usize, n_dn: usize },
    #[error("impurity configuration does not fit on {0} sites")]
    SiteMismatch(usize),
}

#[derive(Debug, Clone)]
pub struct CriticalState {
    pub config: ImpurityConfig,
    pub index: usize,
    pub amplitudes: Vec<f64>,
}

impl CriticalState {
    pub fn determinant(&self) -> Determinant {
        let m = self.config.mask();
        Determinant::new(m, m)
    }

    /// Occupation probabilities: a single 1 at the critical determinant.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.amplitudes.len()];
        p[self.index] = 1.0;
        p
    }
}

pub fn build_critical_state(config: &ImpurityConfig, basis: &SectorBasis) -> Result<CriticalState, CriticalError> {
    let n = config.count();
    if n != basis.n_up() || n != basis.n_dn() {
        return Err(CriticalError::SectorMismatch { impurities: n, n_up: basis.n_up(), n_dn: basis.n_dn() });
    }
    if config.sites().iter().any(|&s| s >= basis.sites()) {
        return Err(CriticalError::SiteMismatch(basis.sites()));
    }
    let m = config.mask();
    let index = basis.rank(Determinant::new(m, m)).map_err(|_| CriticalError::SiteMismatch(basis.sites()))?;
    let mut amplitudes = vec![0.0; basis.dim()];
    amplitudes[index] = 1.0;
    Ok(CriticalState { config: config.clone(), index, amplitudes })
}

/// `|⟨Π_{i∈subset} n̂_i⟩ − Π_{i∈subset} ⟨n̂_i⟩|`
pub fn verify_factorization(state: &CriticalState, subset: &[usize]) -> f64 {
    assert!(!subset.is_empty(), "subset must not be empty");
    let det = state.determinant();
    let n = |i: usize| det.occupation(i) as f64;
    // single determinant: ⟨Π n̂_i⟩ is the product of its occupations
    let joint: f64 = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(_, a)| a * a * subset.iter().map(|&i| n(i)).product::<f64>())
        .sum();
    let product: f64 = subset.iter().map(|&i| n(i)).product();
    (joint - product).abs()
}

/// Mean `2 Σ_{j∈initial} Δv_j`; every central moment vanishes.
pub fn critical_moment_oracle(initial: &ImpurityConfig, delta: &PotentialDelta) -> MomentSet {
    let mean = 2.0 * initial.sites().iter().map(|&j| delta.delta_v[j]).sum::<f64>();
    MomentSet::from_central(mean, 0.0, 0.0, Some(0.0))
}
