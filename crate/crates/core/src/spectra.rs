//! Dense eigendecomposition of sector Hamiltonians and initial-ensemble weights.

use faer::{Mat, Side};
use thiserror::Error;

use crate::hamiltonian::SparseHamiltonian;

/// Default largest dimension accepted by [`diagonalize`].
pub const DEFAULT_DENSE_LIMIT: usize = 6000;
/// Eigenvalues closer than this (units of J) count as degenerate at `T = 0`.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;
/// Default probability below which eigenstates are dropped from the support.
pub const DEFAULT_WEIGHT_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("matrix dimension {dim} exceeds the dense limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid temperature {0}")]
    InvalidTemperature(f64),
    #[error("invalid weight cutoff {0}; expected a value in [0, 1e-6]")]
    InvalidCutoff(f64),
}

/// Full spectrum with orthonormal eigenvectors, energies ascending.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    values: Vec<f64>,
    // column-major, column k pairs with values[k]
    vectors: Vec<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ground_energy(&self) -> f64 {
        self.values[0]
    }

    #[inline]
    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// Column-major eigenvector matrix.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Builds an eigensystem from explicit parts. Columns are reordered so that
    /// the values ascend.
    pub fn from_parts(values: Vec<f64>, vectors: Vec<f64>) -> Self {
        let n = values.len();
        assert_eq!(vectors.len(), n * n, "eigenvector matrix must be square");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut v = Vec::with_capacity(n * n);
        for &k in &order {
            v.extend_from_slice(&vectors[k * n..(k + 1) * n]);
        }
        Self { values: order.iter().map(|&k| values[k]).collect(), vectors: v }
    }
}

/// Eigendecomposition of a dense symmetric matrix given column-major.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<EigenSystem, SpectraError> {
    assert_eq!(matrix.len(), n * n);
    if n == 0 {
        return Ok(EigenSystem { values: Vec::new(), vectors: Vec::new() });
    }
    let a = Mat::<f64>::from_fn(n, n, |i, j| matrix[j * n + i]);
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| SpectraError::NoConvergence(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).map(|k| s[k]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for k in 0..n {
        for i in 0..n {
            vectors.push(u[(i, k)]);
        }
    }
    Ok(EigenSystem::from_parts(values, vectors))
}

pub fn diagonalize(h: &SparseHamiltonian) -> Result<EigenSystem, SpectraError> {
    diagonalize_with_limit(h, DEFAULT_DENSE_LIMIT)
}

pub fn diagonalize_with_limit(h: &SparseHamiltonian, limit: usize) -> Result<EigenSystem, SpectraError> {
    if h.dim() > limit {
        return Err(SpectraError::DimensionTooLarge { dim: h.dim(), limit });
    }
    symmetric_eigen(&h.to_dense(), h.dim())
}

/// Populations of the initial ensemble over the eigenstates of `H_0`.
#[derive(Debug, Clone)]
pub struct ThermalWeights {
    temperature: f64,
    probs: Vec<f64>,
    support: Vec<usize>,
    truncation_mass: f64,
    log_partition: Option<f64>,
}

impl ThermalWeights {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Weight of every eigenstate, including the ones cut from the support.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Eigenstate indices whose weight passed the cutoff, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `(index, p_n)` over the support.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().map(move |&n| (n, self.probs[n]))
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    /// `ln Z` for `T > 0`; `None` at zero temperature.
    pub fn log_partition(&self) -> Option<f64> {
        self.log_partition
    }

    /// Weights concentrated on explicit eigenstates, e.g. for a pure state.
    pub fn from_probabilities(probs: Vec<f64>, temperature: f64, cutoff: f64) -> Self {
        let support: Vec<usize> = (0..probs.len()).filter(|&n| probs[n] >= cutoff && probs[n] > 0.0).collect();
        let kept: f64 = support.iter().map(|&n| probs[n]).sum();
        Self { temperature, truncation_mass: (1.0 - kept).max(0.0), probs, support, log_partition: None }
    }
}

/// `ln Σ_n e^{−ε_n/T}` with the minimum energy factored out.
pub fn log_partition(values: &[f64], temperature: f64) -> f64 {
    let e0 = values.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|&e| (-(e - e0) / temperature).exp()).sum();
    -e0 / temperature + s.ln()
}

pub fn thermal_weights(eig: &EigenSystem, temperature: f64, cutoff: f64) -> Result<ThermalWeights, SpectraError> {
    thermal_weights_with_tol(eig, temperature, cutoff, DEFAULT_DEGENERACY_TOL)
}

/// Boltzmann weights (`k_B = 1`); at `T = 0` a uniform mixture over the
/// eigenvalues within `degeneracy_tol` of the ground energy.
pub fn thermal_weights_with_tol(
    eig: &EigenSystem,
    temperature: f64,
    cutoff: f64,
    degeneracy_tol: f64,
) -> Result<ThermalWeights, SpectraError> {
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(SpectraError::InvalidTemperature(temperature));
    }
    if !(0.0..=1e-6).contains(&cutoff) {
        return Err(SpectraError::InvalidCutoff(cutoff));
    }
    let values = eig.values();
    let n = values.len();
    let e0 = values[0];
    let mut probs = vec![0.0; n];
    let mut log_z = None;
    if temperature == 0.0 {
        let g = values.iter().take_while(|&&e| e - e0 <= degeneracy_tol).count();
        for p in probs.iter_mut().take(g) {
            *p = 1.0 / g as f64;
        }
    } else {
        let mut z = 0.0;
        for (p, &e) in probs.iter_mut().zip(values) {
            *p = (-(e - e0) / temperature).exp();
            z += *p;
        }
        for p in probs.iter_mut() {
            *p /= z;
        }
        log_z = Some(-e0 / temperature + z.ln());
    }
    let support: Vec<usize> = (0..n).filter(|&k| probs[k] > 0.0 && probs[k] >= cutoff).collect();
    let kept: f64 = support.iter().map(|&k| probs[k]).sum();
    let excluded: f64 = (0..n).filter(|k| support.binary_search(k).is_err()).map(|k| probs[k]).sum();
    debug_assert!((kept + excluded - 1.0).abs() < 1e-9);
    Ok(ThermalWeights { temperature, probs, support, truncation_mass: excluded, log_partition: log_z })
}
