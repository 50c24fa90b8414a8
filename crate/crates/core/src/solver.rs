//! Initial-state kernels for a potential profile, and a concurrent cache of
//! them keyed by the full model definition.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::SectorBasis;
use crate::ground::{ground_manifold, SubspaceOptions};
use crate::hamiltonian::{HamiltonianError, HoppingTable, LatticeSpec, SparseHamiltonian};
use crate::kernel::InitialStateKernel;
use crate::spectra::{
    diagonalize_with_limit, thermal_weights_with_tol, SpectraError, DEFAULT_DEGENERACY_TOL, DEFAULT_DENSE_LIMIT,
    DEFAULT_WEIGHT_CUTOFF,
};
use crate::thermal::{thermal_pattern_density, ChebyshevOptions, PatternDensity};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

/// How initial states are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    /// Dense up to `auto_dense_limit`, iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub mode: SolverMode,
    pub auto_dense_limit: usize,
    pub dense_limit: usize,
    pub degeneracy_tol: f64,
    pub weight_cutoff: f64,
    pub subspace: SubspaceOptions,
    pub chebyshev: ChebyshevOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: SolverMode::Auto,
            auto_dense_limit: 1500,
            dense_limit: DEFAULT_DENSE_LIMIT,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
            weight_cutoff: DEFAULT_WEIGHT_CUTOFF,
            subspace: SubspaceOptions::default(),
            chebyshev: ChebyshevOptions::default(),
        }
    }
}

/// Everything about the model except the potential profile.
#[derive(Debug)]
pub struct ProfileSolver {
    lattice: LatticeSpec,
    basis: Arc<SectorBasis>,
    hopping: Arc<HoppingTable>,
    options: SolverOptions,
}

impl ProfileSolver {
    pub fn new(lattice: LatticeSpec, basis: SectorBasis, options: SolverOptions) -> Result<Self, HamiltonianError> {
        let hopping = Arc::new(HoppingTable::build(&lattice, &basis)?);
        Ok(Self { lattice, basis: Arc::new(basis), hopping, options })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn hamiltonian(&self, potential: &[f64]) -> Result<SparseHamiltonian, HamiltonianError> {
        SparseHamiltonian::from_hopping(self.hopping.clone(), self.lattice.interaction, potential.to_vec())
    }

    fn use_dense(&self) -> bool {
        match self.options.mode {
            SolverMode::Dense => true,
            SolverMode::Iterative => false,
            SolverMode::Auto => self.basis.dim() <= self.options.auto_dense_limit,
        }
    }

    /// One kernel per temperature, in the order given.
    pub fn kernels(&self, potential: &[f64], temperatures: &[f64]) -> Result<Vec<InitialStateKernel>, SolveError> {
        let h = self.hamiltonian(potential)?;
        let opts = &self.options;
        if self.use_dense() {
            let eig = diagonalize_with_limit(&h, opts.dense_limit)?;
            return temperatures
                .iter()
                .map(|&t| {
                    let w = thermal_weights_with_tol(&eig, t, opts.weight_cutoff, opts.degeneracy_tol)?;
                    Ok(InitialStateKernel::from_eigen(&h, &self.basis, &eig, &w))
                })
                .collect();
        }
        for &t in temperatures {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(SpectraError::InvalidTemperature(t).into());
            }
        }
        let ground = ground_manifold(&h, opts.degeneracy_tol, &opts.subspace)?;
        temperatures
            .iter()
            .map(|&t| {
                let pd = if t == 0.0 {
                    let vecs: Vec<&[f64]> = ground.vectors.iter().map(Vec::as_slice).collect();
                    let w = vec![1.0 / vecs.len() as f64; vecs.len()];
                    PatternDensity::from_vectors(&h, &vecs, &w)
                } else {
                    thermal_pattern_density(&h, t, ground.energy(), &opts.chebyshev)?
                };
                Ok(InitialStateKernel::from_pattern(&pd, &h, &self.basis))
            })
            .collect()
    }
}

type Kernels = Arc<Vec<InitialStateKernel>>;
type Slot = Arc<OnceLock<Result<Kernels, String>>>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    model: Vec<u64>,
    potential: Vec<u64>,
    temperatures: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

/// Concurrent LRU cache of per-profile kernels.
///
/// The first thread to request a key computes it; concurrent requests for the
/// same key block on that computation instead of repeating it.
#[derive(Debug)]
pub struct KernelCache {
    capacity: usize,
    entries: Mutex<HashMap<CacheKey, (Slot, u64)>>,
    clock: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    evictions: AtomicU64,
}

impl KernelCache {
    /// `capacity = 0` disables caching.
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Mutex::new(HashMap::new()),
            clock: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            evictions: AtomicU64::new(0),
        }
    }

    /// Entry budget for a memory budget in bytes, given the lattice size.
    pub fn capacity_for_budget(bytes: usize, sites: usize) -> usize {
        let per_temperature = 8 * (sites.pow(3) + sites.pow(2) + 8 * sites) + 256;
        (bytes / (3 * per_temperature)).max(1)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            evictions: self.evictions.load(Ordering::Relaxed),
        }
    }

    fn key(solver: &ProfileSolver, potential: &[f64], temperatures: &[f64]) -> CacheKey {
        let lat = solver.lattice();
        let b = solver.basis();
        let model = vec![
            lat.sites as u64,
            lat.hopping.to_bits(),
            lat.interaction.to_bits(),
            lat.boundary as u64,
            b.n_up() as u64,
            b.n_dn() as u64,
        ];
        CacheKey {
            model,
            potential: potential.iter().map(|v| v.to_bits()).collect(),
            temperatures: temperatures.iter().map(|v| v.to_bits()).collect(),
        }
    }

    pub fn get_or_compute(
        &self,
        solver: &ProfileSolver,
        potential: &[f64],
        temperatures: &[f64],
    ) -> Result<Kernels, String> {
        if self.capacity == 0 {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return solver.kernels(potential, temperatures).map(Arc::new).map_err(|e| e.to_string());
        }
        let key = Self::key(solver, potential, temperatures);
        let slot = {
            let mut map = self.entries.lock().expect("cache lock");
            let now = self.clock.fetch_add(1, Ordering::Relaxed);
            let slot = match map.get_mut(&key) {
                Some((slot, used)) => {
                    *used = now;
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    slot.clone()
                }
                None => {
                    self.misses.fetch_add(1, Ordering::Relaxed);
                    let slot: Slot = Arc::new(OnceLock::new());
                    map.insert(key.clone(), (slot.clone(), now));
                    slot
                }
            };
            while map.len() > self.capacity {
                let oldest =
                    map.iter().filter(|(k, _)| **k != key).min_by_key(|(_, (_, used))| *used).map(|(k, _)| k.clone());
                match oldest {
                    Some(k) => {
                        map.remove(&k);
                        self.evictions.fetch_add(1, Ordering::Relaxed);
                    }
                    None => break,
                }
            }
            slot
        };
        slot.get_or_init(|| solver.kernels(potential, temperatures).map(Arc::new).map_err(|e| e.to_string())).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ImpurityConfig;

    fn solver(mode: SolverMode) -> ProfileSolver {
        let opts = SolverOptions {
            mode,
            subspace: SubspaceOptions { block: 16, dense_below: 0, ..Default::default() },
            ..Default::default()
        };
        ProfileSolver::new(LatticeSpec::open(6, -5.0), SectorBasis::new(6, 3, 3).unwrap(), opts).unwrap()
    }

    #[test]
    fn iterative_route_matches_dense() {
        let dense = solver(SolverMode::Dense);
        let iter = solver(SolverMode::Iterative);
        let pot = ImpurityConfig::new(vec![1, 2, 5], -4.0, 6).unwrap().potential(6);
        let temps = [0.0, 2.0, 30.0];
        let a = dense.kernels(&pot, &temps).unwrap();
        let b = iter.kernels(&pot, &temps).unwrap();
        let delta = crate::hamiltonian::PotentialDelta { delta_v: vec![0.0, 4.0, 0.0, -4.0, 0.0, 0.0] };
        for (ka, kb) in a.iter().zip(&b) {
            let (ma, mb) = (ka.moments(&delta), kb.moments(&delta));
            assert!((ma.mean - mb.mean).abs() < 1e-9);
            assert!((ma.variance - mb.variance).abs() < 1e-9);
            assert!((ma.mu3 - mb.mu3).abs() < 1e-8);
            assert!((ka.entanglement().site_average - kb.entanglement().site_average).abs() < 1e-9);
        }
    }

    #[test]
    fn cache_reuses_and_evicts() {
        let s = solver(SolverMode::Dense);
        let cache = KernelCache::new(2);
        let p = |sites: Vec<usize>| ImpurityConfig::new(sites, -2.0, 6).unwrap().potential(6);
        let a = cache.get_or_compute(&s, &p(vec![0]), &[0.0]).unwrap();
        let a2 = cache.get_or_compute(&s, &p(vec![0]), &[0.0]).unwrap();
        assert!(Arc::ptr_eq(&a, &a2));
        cache.get_or_compute(&s, &p(vec![1]), &[0.0]).unwrap();
        cache.get_or_compute(&s, &p(vec![2]), &[0.0]).unwrap();
        assert_eq!(cache.len(), 2);
        let st = cache.stats();
        assert_eq!((st.hits, st.misses, st.evictions), (1, 3, 1));
        let off = KernelCache::new(0);
        off.get_or_compute(&s, &p(vec![0]), &[0.0]).unwrap();
        assert!(off.is_empty());
    }
}
