//! Local densities, density correlators, single-site reduced density matrices
//! and the site-averaged linear entropy.
//!
//! Every observable here is diagonal in the occupation basis, so it only needs
//! the occupation probabilities `P(k) = ⟨k|ρ|k⟩` of the state. In a fixed
//! `(N↑, N↓)` sector the single-site density matrix is diagonal in
//! `{0, ↑, ↓, ↑↓}` as well, so four probabilities describe it completely.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::basis::SectorBasis;
use crate::spectra::{EigenSystem, ThermalWeights};

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("correlator order {0} is not supported (maximum 3)")]
    UnsupportedOrder(usize),
    #[error("probability vector has length {got}, basis dimension is {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `P(k) = Σ_n p_n |⟨k|n⟩|²` for an eigenstate ensemble.
pub fn occupation_probabilities(eig: &EigenSystem, weights: &ThermalWeights) -> Vec<f64> {
    let mut probs = vec![0.0; eig.dim()];
    for (n, p) in weights.iter() {
        for (acc, &a) in probs.iter_mut().zip(eig.vector(n)) {
            *acc += p * a * a;
        }
    }
    probs
}

/// `P(k) = |ψ(k)|²` for a pure state.
pub fn state_probabilities(psi: &[f64]) -> Vec<f64> {
    psi.iter().map(|a| a * a).collect()
}

fn check_len(probs: &[f64], basis: &SectorBasis) -> Result<(), ObservableError> {
    if probs.len() != basis.dim() {
        return Err(ObservableError::LengthMismatch { got: probs.len(), expected: basis.dim() });
    }
    Ok(())
}

/// `⟨n̂_j⟩` for every site.
pub fn density_profile(probs: &[f64], basis: &SectorBasis) -> Vec<f64> {
    let l = basis.sites();
    let mut out = vec![0.0; l];
    for (k, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let det = basis.unrank(k);
        for (j, o) in out.iter_mut().enumerate() {
            *o += p * det.occupation(j) as f64;
        }
    }
    out
}

/// One-, two- and (optionally) three-point density correlators.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCorrelators {
    sites: usize,
    one: Vec<f64>,
    two: Vec<f64>,
    three: Option<Vec<f64>>,
}

impl DensityCorrelators {
    /// Assembles tables computed elsewhere; `two` is `L×L`, `three` is `L³`.
    pub fn from_tables(sites: usize, one: Vec<f64>, two: Vec<f64>, three: Option<Vec<f64>>) -> Self {
        assert_eq!(one.len(), sites);
        assert_eq!(two.len(), sites * sites);
        if let Some(t) = &three {
            assert_eq!(t.len(), sites * sites * sites);
        }
        Self { sites, one, two, three }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// `⟨n̂_j⟩`
    pub fn one(&self, j: usize) -> f64 {
        self.one[j]
    }

    /// `⟨n̂_j n̂_ℓ⟩`
    pub fn two(&self, j: usize, l: usize) -> f64 {
        self.two[j * self.sites + l]
    }

    /// `⟨n̂_j n̂_ℓ n̂_m⟩`; panics when only order 2 was computed.
    pub fn three(&self, j: usize, l: usize, m: usize) -> f64 {
        let s = self.sites;
        self.three.as_ref().expect("third-order correlators were not computed")[(j * s + l) * s + m]
    }

    pub fn has_three(&self) -> bool {
        self.three.is_some()
    }

    pub fn densities(&self) -> &[f64] {
        &self.one
    }

    /// Connected two-point function `⟨n̂_j n̂_ℓ⟩ − ⟨n̂_j⟩⟨n̂_ℓ⟩`.
    pub fn connected_two(&self, j: usize, l: usize) -> f64 {
        self.two(j, l) - self.one[j] * self.one[l]
    }
}

/// Correlator tables up to `order` (1, 2 or 3) from occupation probabilities.
pub fn density_correlators(
    probs: &[f64],
    basis: &SectorBasis,
    order: usize,
) -> Result<DensityCorrelators, ObservableError> {
    if order > 3 {
        return Err(ObservableError::UnsupportedOrder(order));
    }
    check_len(probs, basis)?;
    let s = basis.sites();
    let mut one = vec![0.0; s];
    let mut two = vec![0.0; s * s];
    let mut three = (order >= 3).then(|| vec![0.0; s * s * s]);
    let mut occ = vec![0.0; s];
    for (k, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let det = basis.unrank(k);
        for (j, o) in occ.iter_mut().enumerate() {
            *o = det.occupation(j) as f64;
        }
        for j in 0..s {
            let a = p * occ[j];
            if a == 0.0 {
                continue;
            }
            one[j] += a;
            if order < 2 {
                continue;
            }
            for l in 0..s {
                let b = a * occ[l];
                if b == 0.0 {
                    continue;
                }
                two[j * s + l] += b;
                if let Some(t) = three.as_mut() {
                    for m in 0..s {
                        t[(j * s + l) * s + m] += b * occ[m];
                    }
                }
            }
        }
    }
    Ok(DensityCorrelators { sites: s, one, two, three })
}

/// Diagonal of the single-site reduced density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiteRdm {
    pub p_empty: f64,
    pub p_up: f64,
    pub p_dn: f64,
    pub p_double: f64,
}

impl SiteRdm {
    pub fn from_moments(n_up: f64, n_dn: f64, n_double: f64) -> Self {
        let p_up = n_up - n_double;
        let p_dn = n_dn - n_double;
        Self { p_empty: 1.0 - p_up - p_dn - n_double, p_up, p_dn, p_double: n_double }
    }

    /// `Tr ρ_i²`
    pub fn purity(&self) -> f64 {
        self.p_empty.powi(2) + self.p_up.powi(2) + self.p_dn.powi(2) + self.p_double.powi(2)
    }

    /// `1 − Tr ρ_i²`, in `[0, 3/4]`.
    pub fn linear_entropy(&self) -> f64 {
        1.0 - self.purity()
    }
}

pub fn site_rdm(probs: &[f64], basis: &SectorBasis, site: usize) -> SiteRdm {
    let (mut up, mut dn, mut dbl) = (0.0, 0.0, 0.0);
    for (k, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let det = basis.unrank(k);
        let (u, d) = (det.up_at(site), det.dn_at(site));
        if u {
            up += p;
        }
        if d {
            dn += p;
        }
        if u && d {
            dbl += p;
        }
    }
    SiteRdm::from_moments(up, dn, dbl)
}

/// Linear entropy of every site and its average over the chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntanglementResult {
    pub rdms: Vec<SiteRdm>,
    pub per_site: Vec<f64>,
    pub site_average: f64,
}

impl EntanglementResult {
    pub fn from_rdms(rdms: Vec<SiteRdm>) -> Self {
        let per_site: Vec<f64> = rdms.iter().map(SiteRdm::linear_entropy).collect();
        let site_average = per_site.iter().sum::<f64>() / per_site.len() as f64;
        Self { rdms, per_site, site_average }
    }

    /// CSV with header `site,p_empty,p_up,p_dn,p_double,lin_entropy`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ObservableError> {
        writeln!(out, "site,p_empty,p_up,p_dn,p_double,lin_entropy")?;
        for (i, (r, s)) in self.rdms.iter().zip(&self.per_site).enumerate() {
            writeln!(out, "{i},{},{},{},{},{}", r.p_empty, r.p_up, r.p_dn, r.p_double, s)?;
        }
        Ok(())
    }
}

pub fn entanglement_average(probs: &[f64], basis: &SectorBasis) -> EntanglementResult {
    let rdms = (0..basis.sites()).map(|i| site_rdm(probs, basis, i)).collect();
    EntanglementResult::from_rdms(rdms)
}

/// Arithmetic mean of site-averaged entropies over disorder configurations.
pub fn ensemble_entanglement<'a>(results: impl IntoIterator<Item = &'a EntanglementResult>) -> f64 {
    let (sum, count) = results.into_iter().fold((0.0, 0usize), |(s, c), r| (s + r.site_average, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Determinant;
    use crate::hamiltonian::{build_hamiltonian, ImpurityConfig, LatticeSpec};
    use crate::spectra::{diagonalize, thermal_weights};

    fn ground_probs(sites: usize, nu: usize, nd: usize, u: f64, cfg: ImpurityConfig) -> (SectorBasis, Vec<f64>) {
        let basis = SectorBasis::new(sites, nu, nd).unwrap();
        let h = build_hamiltonian(&LatticeSpec::open(sites, u), &cfg, &basis).unwrap();
        let eig = diagonalize(&h).unwrap();
        let w = thermal_weights(&eig, 0.0, 1e-12).unwrap();
        let p = occupation_probabilities(&eig, &w);
        (basis, p)
    }

    #[test]
    fn dimer_density_and_rdm() {
        let (basis, p) = ground_probs(2, 1, 1, -5.0, ImpurityConfig::empty(0.0));
        let n = density_profile(&p, &basis);
        assert!((n[0] - 1.0).abs() < 1e-12 && (n[1] - 1.0).abs() < 1e-12);

        let (basis, p) = ground_probs(2, 1, 1, 0.0, ImpurityConfig::empty(0.0));
        let r = site_rdm(&p, &basis, 0);
        for q in [r.p_empty, r.p_up, r.p_dn, r.p_double] {
            assert!((q - 0.25).abs() < 1e-12);
        }
        assert!((r.linear_entropy() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn clean_open_chain_reflection_symmetry() {
        let (basis, p) = ground_probs(6, 3, 3, -5.0, ImpurityConfig::empty(0.0));
        let n = density_profile(&p, &basis);
        assert!((n.iter().sum::<f64>() - 6.0).abs() < 1e-10);
        for j in 0..6 {
            assert!((n[j] - n[5 - j]).abs() < 1e-9);
        }
        let e = entanglement_average(&p, &basis);
        assert!(e.site_average > 0.0 && e.site_average <= 0.75);
    }

    #[test]
    fn single_determinant_is_unentangled() {
        let basis = SectorBasis::new(4, 2, 2).unwrap();
        let k = basis.rank(Determinant::new(0b0101, 0b0101)).unwrap();
        let mut p = vec![0.0; basis.dim()];
        p[k] = 1.0;
        let e = entanglement_average(&p, &basis);
        assert_eq!(e.site_average, 0.0);
        let c = density_correlators(&p, &basis, 3).unwrap();
        assert_eq!(c.two(0, 2), 4.0);
        assert_eq!(c.connected_two(0, 1), 0.0);
        assert_eq!(c.three(0, 0, 2), 8.0);
        assert!(density_correlators(&p, &basis, 4).is_err());
    }

    #[test]
    fn rdm_csv_header() {
        let basis = SectorBasis::new(2, 1, 1).unwrap();
        let e = entanglement_average(&[0.25; 4], &basis);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("site,p_empty,p_up,p_dn,p_double,lin_entropy\n0,"));
        assert_eq!(text.lines().count(), 3);
    }
}
