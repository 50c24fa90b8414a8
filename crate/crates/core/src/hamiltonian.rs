//! Sector-restricted Hubbard Hamiltonian with point-like impurities.
//!
//! ```text
//! H = −J Σ_{i,σ} (c†_{iσ} c_{i+1,σ} + h.c.) + U Σ_i n_{i↑} n_{i↓} + Σ_i V_i n_i
//! ```
//!
//! The hopping part depends only on the lattice and the sector, so it is built
//! once as a [`HoppingTable`] and shared (via `Arc`) by every Hamiltonian that
//! differs only in its on-site potential.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{parity_between, SectorBasis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("basis has {basis} sites but the lattice has {lattice}")]
    DimensionMismatch { lattice: usize, basis: usize },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid impurity configuration: {0}")]
    InvalidImpurity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Open => f.write_str("open"),
            Boundary::Periodic => f.write_str("periodic"),
        }
    }
}

/// Chain geometry and the potential-independent couplings (units of J).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub sites: usize,
    pub hopping: f64,
    pub interaction: f64,
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(sites: usize, hopping: f64, interaction: f64, boundary: Boundary) -> Self {
        Self { sites, hopping, interaction, boundary }
    }

    /// Open chain with `J = 1`.
    pub fn open(sites: usize, interaction: f64) -> Self {
        Self::new(sites, 1.0, interaction, Boundary::Open)
    }

    pub fn validate(&self) -> Result<(), HamiltonianError> {
        if self.sites == 0 {
            return Err(HamiltonianError::InvalidLattice("chain needs at least one site".into()));
        }
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(HamiltonianError::InvalidLattice(format!(
                "hopping must be positive and finite, got {}",
                self.hopping
            )));
        }
        if !self.interaction.is_finite() {
            return Err(HamiltonianError::InvalidLattice("interaction must be finite".into()));
        }
        Ok(())
    }

    /// Nearest-neighbour bonds `(i, j)` with `i < j`, each listed once.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.sites;
        let mut bonds: Vec<(usize, usize)> = (0..l.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        // a two-site ring has a single bond
        if self.boundary == Boundary::Periodic && l > 2 {
            bonds.push((0, l - 1));
        }
        bonds
    }
}

/// Point-like impurities of a common strength on a set of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpurityConfig {
    sites: Vec<usize>,
    strength: f64,
}

impl ImpurityConfig {
    /// Sorts `sites`; rejects duplicates and sites outside `0..lattice_sites`.
    pub fn new(mut sites: Vec<usize>, strength: f64, lattice_sites: usize) -> Result<Self, HamiltonianError> {
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(HamiltonianError::InvalidImpurity(format!("duplicate site in {sites:?}")));
        }
        if let Some(&s) = sites.iter().find(|&&s| s >= lattice_sites) {
            return Err(HamiltonianError::InvalidImpurity(format!(
                "site {s} outside a chain of {lattice_sites} sites"
            )));
        }
        if !strength.is_finite() {
            return Err(HamiltonianError::InvalidImpurity("strength must be finite".into()));
        }
        Ok(Self { sites, strength })
    }

    pub fn empty(strength: f64) -> Self {
        Self { sites: Vec::new(), strength }
    }

    pub fn from_mask(mask: u32, strength: f64) -> Self {
        let sites = (0..32).filter(|i| mask >> i & 1 == 1).collect();
        Self { sites, strength }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn count(&self) -> usize {
        self.sites.len()
    }

    /// Bitmask of the impurity sites; chains up to 32 sites.
    pub fn mask(&self) -> u32 {
        self.sites.iter().fold(0, |m, &s| m | 1 << s)
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    /// Concentration `C = 100 N_i / L` in percent.
    pub fn concentration(&self, lattice_sites: usize) -> f64 {
        100.0 * self.sites.len() as f64 / lattice_sites as f64
    }

    /// Impurities are attractive in the regime the model is meant for.
    pub fn is_attractive(&self) -> bool {
        self.strength <= 0.0
    }

    /// Per-site potential `V_i`.
    pub fn potential(&self, lattice_sites: usize) -> Vec<f64> {
        let mut v = vec![0.0; lattice_sites];
        for &s in &self.sites {
            v[s] = self.strength;
        }
        v
    }
}

/// `Δv_j = V_j^f − V_j^0`, the only part of the Hamiltonian a quench changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialDelta {
    pub delta_v: Vec<f64>,
}

impl PotentialDelta {
    pub fn sites(&self) -> usize {
        self.delta_v.len()
    }

    pub fn is_zero(&self) -> bool {
        self.delta_v.iter().all(|&d| d == 0.0)
    }

    /// Value of the diagonal operator `ΔH = Σ_j Δv_j n_j` on an occupation row.
    #[inline]
    pub fn on_occupations(&self, occ: &[u8]) -> f64 {
        self.delta_v.iter().zip(occ).map(|(d, &n)| d * n as f64).sum()
    }
}

pub fn potential_delta(initial: &ImpurityConfig, final_: &ImpurityConfig, lattice_sites: usize) -> PotentialDelta {
    let v0 = initial.potential(lattice_sites);
    let vf = final_.potential(lattice_sites);
    PotentialDelta { delta_v: vf.iter().zip(&v0).map(|(f, i)| f - i).collect() }
}

/// Off-diagonal (hopping) part of the Hamiltonian in CSR form, both triangles.
#[derive(Debug, Clone)]
pub struct HoppingTable {
    dim: usize,
    sites: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    /// `n_i(k)` for every state, row-major `dim × sites`.
    occupations: Vec<u8>,
    double_occupancy: Vec<u8>,
}

impl HoppingTable {
    pub fn build(lattice: &LatticeSpec, basis: &SectorBasis) -> Result<Self, HamiltonianError> {
        lattice.validate()?;
        if basis.sites() != lattice.sites {
            return Err(HamiltonianError::DimensionMismatch { lattice: lattice.sites, basis: basis.sites() });
        }
        let dim = basis.dim();
        let bonds = lattice.bonds();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut row: Vec<(u32, f64)> = Vec::new();
        row_ptr.push(0);
        for det in basis.iter() {
            row.clear();
            for &(a, b) in &bonds {
                for spin in 0..2 {
                    let mask = if spin == 0 { det.up } else { det.dn };
                    let (oa, ob) = (mask >> a & 1, mask >> b & 1);
                    if oa == ob {
                        continue;
                    }
                    let moved = mask ^ (1 << a) ^ (1 << b);
                    let sign = parity_between(mask, a, b) as f64;
                    let target = if spin == 0 {
                        crate::basis::Determinant::new(moved, det.dn)
                    } else {
                        crate::basis::Determinant::new(det.up, moved)
                    };
                    let k2 = basis.rank_unchecked(target);
                    row.push((k2 as u32, -lattice.hopping * sign));
                }
            }
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        let occupations = basis.occupations();
        let double_occupancy = basis.iter().map(|d| d.double_occupancy() as u8).collect();
        Ok(Self { dim, sites: lattice.sites, row_ptr, cols, vals, occupations, double_occupancy })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Number of stored off-diagonal entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, k: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.row_ptr[k], self.row_ptr[k + 1]);
        (&self.cols[s..e], &self.vals[s..e])
    }

    #[inline]
    pub fn occupation_row(&self, k: usize) -> &[u8] {
        &self.occupations[k * self.sites..(k + 1) * self.sites]
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occupations
    }

    /// Diagonal `U·D(k) + Σ_i V_i n_i(k)` for a per-site potential.
    pub fn diagonal(&self, interaction: f64, potential: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|k| {
                let occ = self.occupation_row(k);
                let pot: f64 = occ.iter().zip(potential).map(|(&n, v)| n as f64 * v).sum();
                interaction * self.double_occupancy[k] as f64 + pot
            })
            .collect()
    }
}

/// Real symmetric sparse Hamiltonian over one sector.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    hopping: Arc<HoppingTable>,
    diagonal: Vec<f64>,
    potential: Vec<f64>,
}

impl SparseHamiltonian {
    /// Shares `hopping` with other Hamiltonians on the same lattice and sector.
    pub fn from_hopping(
        hopping: Arc<HoppingTable>,
        interaction: f64,
        potential: Vec<f64>,
    ) -> Result<Self, HamiltonianError> {
        if potential.len() != hopping.sites() {
            return Err(HamiltonianError::DimensionMismatch { lattice: potential.len(), basis: hopping.sites() });
        }
        let diagonal = hopping.diagonal(interaction, &potential);
        Ok(Self { hopping, diagonal, potential })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn hopping(&self) -> &Arc<HoppingTable> {
        &self.hopping
    }

    /// Off-diagonal entries `(row, col, value)` with `row < col`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            let (cols, vals) = self.hopping.row(r);
            cols.iter().zip(vals).filter(move |(&c, _)| (c as usize) > r).map(move |(&c, &v)| (r, c as usize, v))
        })
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (k, yk) in y.iter_mut().enumerate() {
            let (cols, vals) = self.hopping.row(k);
            let mut acc = self.diagonal[k] * x[k];
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            *yk = acc;
        }
    }

    /// `y = H x` for a row-major block of `width` vectors (`x[k * width + c]`).
    pub fn apply_block(&self, x: &[f64], y: &mut [f64], width: usize) {
        self.apply_block_affine(x, y, width, 1.0, 0.0, None, 0.0);
    }

    /// `y = scale·(H − shift)·x + prev_coef·prev` on a row-major block.
    ///
    /// With `prev = None` the last term is dropped. This is the three-term
    /// step used by the Chebyshev recurrences.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_block_affine(
        &self,
        x: &[f64],
        y: &mut [f64],
        width: usize,
        scale: f64,
        shift: f64,
        prev: Option<&[f64]>,
        prev_coef: f64,
    ) {
        debug_assert_eq!(x.len(), self.dim() * width);
        debug_assert_eq!(y.len(), self.dim() * width);
        for k in 0..self.dim() {
            let out = &mut y[k * width..(k + 1) * width];
            let d = scale * (self.diagonal[k] - shift);
            let xk = &x[k * width..(k + 1) * width];
            match prev {
                Some(p) => {
                    let pk = &p[k * width..(k + 1) * width];
                    for ((o, &a), &b) in out.iter_mut().zip(xk).zip(pk) {
                        *o = d * a + prev_coef * b;
                    }
                }
                None => {
                    for (o, &a) in out.iter_mut().zip(xk) {
                        *o = d * a;
                    }
                }
            }
            let (cols, vals) = self.hopping.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                let c = c as usize;
                let sv = scale * v;
                let xc = &x[c * width..(c + 1) * width];
                for (o, &a) in out.iter_mut().zip(xc) {
                    *o += sv * a;
                }
            }
        }
    }

    /// Column-major dense copy (`out[c * dim + r]`), for small systems and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            m[k * n + k] = self.diagonal[k];
            let (cols, vals) = self.hopping.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                m[c as usize * n + k] = v;
            }
        }
        m
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..self.dim() {
            let (_, vals) = self.hopping.row(k);
            let r: f64 = vals.iter().map(|v| v.abs()).sum();
            lo = lo.min(self.diagonal[k] - r);
            hi = hi.max(self.diagonal[k] + r);
        }
        (lo, hi)
    }
}

/// Builds the Hamiltonian for one impurity configuration.
pub fn build_hamiltonian(
    lattice: &LatticeSpec,
    config: &ImpurityConfig,
    basis: &SectorBasis,
) -> Result<SparseHamiltonian, HamiltonianError> {
    if let Some(&s) = config.sites().iter().find(|&&s| s >= lattice.sites) {
        return Err(HamiltonianError::InvalidImpurity(format!("site {s} outside a chain of {} sites", lattice.sites)));
    }
    let hopping = Arc::new(HoppingTable::build(lattice, basis)?);
    SparseHamiltonian::from_hopping(hopping, lattice.interaction, config.potential(lattice.sites))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Determinant;

    #[test]
    fn single_site_doubly_occupied() {
        let basis = SectorBasis::new(1, 1, 1).unwrap();
        let lat = LatticeSpec::open(1, -5.0);
        let cfg = ImpurityConfig::new(vec![0], -3.0, 1).unwrap();
        let h = build_hamiltonian(&lat, &cfg, &basis).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.diagonal()[0], -5.0 + 2.0 * -3.0);
    }

    #[test]
    fn dimension_mismatch() {
        let basis = SectorBasis::new(4, 2, 2).unwrap();
        let lat = LatticeSpec::open(5, -5.0);
        let err = build_hamiltonian(&lat, &ImpurityConfig::empty(-1.0), &basis).unwrap_err();
        assert!(matches!(err, HamiltonianError::DimensionMismatch { .. }));
    }

    #[test]
    fn boundary_terms() {
        let basis = SectorBasis::new(4, 1, 0).unwrap();
        let open = build_hamiltonian(&LatticeSpec::open(4, 0.0), &ImpurityConfig::empty(0.0), &basis).unwrap();
        let ring =
            build_hamiltonian(&LatticeSpec::new(4, 1.0, 0.0, Boundary::Periodic), &ImpurityConfig::empty(0.0), &basis)
                .unwrap();
        let a = basis.rank(Determinant::new(0b0001, 0)).unwrap();
        let b = basis.rank(Determinant::new(0b1000, 0)).unwrap();
        let od = open.to_dense();
        let rd = ring.to_dense();
        let n = basis.dim();
        assert_eq!(od[a * n + b], 0.0);
        assert_eq!(rd[a * n + b], -1.0);
        assert_eq!(open.upper_entries().count(), 3);
        assert_eq!(ring.upper_entries().count(), 4);
    }

    #[test]
    fn symmetric_and_hopping_values() {
        let basis = SectorBasis::new(5, 3, 2).unwrap();
        let lat = LatticeSpec::new(5, 1.0, -4.0, Boundary::Periodic);
        let cfg = ImpurityConfig::new(vec![1, 3], -2.0, 5).unwrap();
        let h = build_hamiltonian(&lat, &cfg, &basis).unwrap();
        let n = h.dim();
        let d = h.to_dense();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(d[r * n + c], d[c * n + r]);
                if r != c && d[r * n + c] != 0.0 {
                    assert_eq!(d[r * n + c].abs(), 1.0);
                }
            }
        }
    }

    #[test]
    fn potential_delta_cases() {
        let l = 8;
        let a = ImpurityConfig::new(vec![1, 4], -5.0, l).unwrap();
        assert!(potential_delta(&a, &a, l).is_zero());
        let b = ImpurityConfig::new(vec![1, 4, 6], -5.0, l).unwrap();
        let d = potential_delta(&a, &b, l);
        let mut expected = vec![0.0; l];
        expected[6] = -5.0;
        assert_eq!(d.delta_v, expected);

        let i = ImpurityConfig::new(vec![2], -1.0, l).unwrap();
        let f = ImpurityConfig::new(vec![5], -10.0, l).unwrap();
        let d = potential_delta(&i, &f, l);
        assert_eq!(d.delta_v[2], 1.0);
        assert_eq!(d.delta_v[5], -10.0);
        assert_eq!(d.delta_v.iter().filter(|&&x| x != 0.0).count(), 2);

        let f2 = ImpurityConfig::new(vec![2, 5], -10.0, l).unwrap();
        assert_eq!(potential_delta(&i, &f2, l).delta_v[2], -9.0);
    }

    #[test]
    fn impurity_validation() {
        assert!(ImpurityConfig::new(vec![1, 1], -1.0, 4).is_err());
        assert!(ImpurityConfig::new(vec![4], -1.0, 4).is_err());
        let c = ImpurityConfig::new(vec![3, 0], -1.0, 4).unwrap();
        assert_eq!(c.sites(), &[0, 3]);
        assert_eq!(c.mask(), 0b1001);
        assert_eq!(c.concentration(4), 50.0);
        assert_eq!(ImpurityConfig::from_mask(0b1001, -1.0), c);
    }
}
