//! Reduced description of an initial state that is sufficient for the work
//! moments of every sudden impurity quench out of it.
//!
//! With `D = Σ_j Δv_j n̂_j` and `[ρ₀, H₀] = 0` the first two TPM moments are
//! `Tr[ρ₀D]` and `Tr[ρ₀D²]`, and the third is `Tr[ρ₀D³] + δ₃` with
//! `δ₃ = Tr[ρ₀(D H₀ D − H₀ D²)]`. Only the hopping part of `H₀` survives in
//! `δ₃`, and a hop across bond `(a, b)` changes `D` by `Δv_a − Δv_b`, so
//!
//! ```text
//! δ₃ = −½ Σ_{a<b} E_ab (Δv_a − Δv_b)²
//! ```
//!
//! where `E_ab` is the kinetic energy on bond `(a, b)` in `ρ₀`. The kernel
//! therefore stores the density cumulants up to third order, the bond energies
//! and the site RDMs, all of size at most `L³`.

use crate::basis::SectorBasis;
use crate::hamiltonian::{PotentialDelta, SparseHamiltonian};
use crate::observables::{DensityCorrelators, EntanglementResult, SiteRdm};
use crate::spectra::{EigenSystem, ThermalWeights};
use crate::thermal::PatternDensity;

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct KernelMoments {
    pub mean: f64,
    pub variance: f64,
    /// Third central moment of the TPM work distribution.
    pub mu3: f64,
    /// Third central moment of `ΔH` in the initial state.
    pub mu3_correlator: f64,
    /// `mu3 − mu3_correlator`
    pub delta3: f64,
}

#[derive(Debug, Clone)]
pub struct InitialStateKernel {
    sites: usize,
    density: Vec<f64>,
    /// `⟨δn_j δn_ℓ⟩` with `δn = n − ⟨n⟩`
    covariance: Vec<f64>,
    /// `⟨δn_j δn_ℓ δn_m⟩`
    third: Vec<f64>,
    /// `(a, b, E_ab)` with `a < b`
    bonds: Vec<(usize, usize, f64)>,
    rdms: Vec<SiteRdm>,
    pub temperature: f64,
    pub truncation_mass: f64,
    pub log_partition: Option<f64>,
}

impl InitialStateKernel {
    pub fn from_pattern(pd: &PatternDensity, h: &SparseHamiltonian, basis: &SectorBasis) -> Self {
        let hop = h.hopping();
        let l = basis.sites();
        let n = h.dim();
        assert_eq!(pd.diag.len(), n);
        assert_eq!(basis.dim(), n);

        let mut density = vec![0.0; l];
        let (mut up, mut dn, mut dbl) = (vec![0.0; l], vec![0.0; l], vec![0.0; l]);
        for (k, &p) in pd.diag.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let det = basis.unrank(k);
            for i in 0..l {
                let (u, d) = (det.up_at(i), det.dn_at(i));
                if u {
                    up[i] += p;
                }
                if d {
                    dn[i] += p;
                }
                if u && d {
                    dbl[i] += p;
                }
            }
        }
        for i in 0..l {
            density[i] = up[i] + dn[i];
        }
        let rdms = (0..l).map(|i| SiteRdm::from_moments(up[i], dn[i], dbl[i])).collect();

        let mut covariance = vec![0.0; l * l];
        let mut third = vec![0.0; l * l * l];
        let mut dev = vec![0.0; l];
        for (k, &p) in pd.diag.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let occ = hop.occupation_row(k);
            for i in 0..l {
                dev[i] = occ[i] as f64 - density[i];
            }
            for j in 0..l {
                let a = p * dev[j];
                for m in 0..l {
                    let b = a * dev[m];
                    covariance[j * l + m] += b;
                    let row = &mut third[(j * l + m) * l..(j * l + m + 1) * l];
                    for (t, &d) in row.iter_mut().zip(&dev) {
                        *t += b * d;
                    }
                }
            }
        }

        let mut bond_energy = vec![0.0; l * l];
        let mut pos = 0;
        for k in 0..n {
            let occ_k = hop.occupation_row(k);
            let (cols, vals) = hop.row(k);
            for (&c, &hv) in cols.iter().zip(vals) {
                let w = pd.offdiag[pos] * hv;
                pos += 1;
                if w == 0.0 {
                    continue;
                }
                let occ_c = hop.occupation_row(c as usize);
                let mut changed = (0..l).filter(|&i| occ_k[i] != occ_c[i]);
                let a = changed.next().expect("hop changes two sites");
                let b = changed.next().expect("hop changes two sites");
                bond_energy[a * l + b] += w;
            }
        }
        let mut bonds = Vec::new();
        for a in 0..l {
            for b in a + 1..l {
                let e = bond_energy[a * l + b];
                if e != 0.0 {
                    bonds.push((a, b, e));
                }
            }
        }

        Self {
            sites: l,
            density,
            covariance,
            third,
            bonds,
            rdms,
            temperature: pd.temperature,
            truncation_mass: 0.0,
            log_partition: pd.log_partition,
        }
    }

    pub fn from_eigen(h: &SparseHamiltonian, basis: &SectorBasis, eig: &EigenSystem, weights: &ThermalWeights) -> Self {
        let pd = PatternDensity::from_eigen(h, eig, weights);
        let mut out = Self::from_pattern(&pd, h, basis);
        out.truncation_mass = weights.truncation_mass();
        out
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn covariance(&self, j: usize, l: usize) -> f64 {
        self.covariance[j * self.sites + l]
    }

    pub fn bond_energies(&self) -> &[(usize, usize, f64)] {
        &self.bonds
    }

    pub fn rdms(&self) -> &[SiteRdm] {
        &self.rdms
    }

    pub fn entanglement(&self) -> EntanglementResult {
        EntanglementResult::from_rdms(self.rdms.clone())
    }

    /// Raw correlator tables reconstructed from the cumulants.
    pub fn correlators(&self) -> DensityCorrelators {
        let l = self.sites;
        let n = &self.density;
        let mut two = vec![0.0; l * l];
        let mut three = vec![0.0; l * l * l];
        for j in 0..l {
            for m in 0..l {
                two[j * l + m] = self.covariance[j * l + m] + n[j] * n[m];
                for r in 0..l {
                    three[(j * l + m) * l + r] = self.third[(j * l + m) * l + r]
                        + n[j] * self.covariance[m * l + r]
                        + n[m] * self.covariance[j * l + r]
                        + n[r] * self.covariance[j * l + m]
                        + n[j] * n[m] * n[r];
                }
            }
        }
        DensityCorrelators::from_tables(l, n.clone(), two, Some(three))
    }

    pub fn moments(&self, delta: &PotentialDelta) -> KernelMoments {
        let l = self.sites;
        let dv = &delta.delta_v;
        assert_eq!(dv.len(), l, "potential delta has the wrong number of sites");
        let active: Vec<usize> = (0..l).filter(|&j| dv[j] != 0.0).collect();
        let mean = active.iter().map(|&j| dv[j] * self.density[j]).sum();
        let mut variance = 0.0;
        let mut mu3_correlator = 0.0;
        for &j in &active {
            for &m in &active {
                let w = dv[j] * dv[m];
                variance += w * self.covariance[j * l + m];
                let row = &self.third[(j * l + m) * l..(j * l + m + 1) * l];
                mu3_correlator += w * active.iter().map(|&r| dv[r] * row[r]).sum::<f64>();
            }
        }
        let delta3 = -0.5 * self.bonds.iter().map(|&(a, b, e)| e * (dv[a] - dv[b]).powi(2)).sum::<f64>();
        KernelMoments { mean, variance, mu3: mu3_correlator + delta3, mu3_correlator, delta3 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_hamiltonian, potential_delta, ImpurityConfig, LatticeSpec};
    use crate::spectra::{diagonalize, thermal_weights};

    #[test]
    fn bond_energies_sum_to_kinetic_energy() {
        let basis = SectorBasis::new(5, 2, 2).unwrap();
        let cfg = ImpurityConfig::new(vec![1, 3], -3.0, 5).unwrap();
        let h = build_hamiltonian(&LatticeSpec::open(5, -5.0), &cfg, &basis).unwrap();
        let eig = diagonalize(&h).unwrap();
        let w = thermal_weights(&eig, 0.0, 1e-12).unwrap();
        let k = InitialStateKernel::from_eigen(&h, &basis, &eig, &w);
        let psi = eig.vector(0);
        let diag_e: f64 = psi.iter().zip(h.diagonal()).map(|(a, d)| a * a * d).sum();
        let kinetic: f64 = k.bond_energies().iter().map(|b| b.2).sum();
        assert!((kinetic + diag_e - eig.ground_energy()).abs() < 1e-10);
        assert_eq!(k.bond_energies().len(), 4);
    }

    #[test]
    fn identity_quench_has_no_moments() {
        let basis = SectorBasis::new(4, 2, 2).unwrap();
        let cfg = ImpurityConfig::new(vec![2], -3.0, 4).unwrap();
        let h = build_hamiltonian(&LatticeSpec::open(4, -5.0), &cfg, &basis).unwrap();
        let eig = diagonalize(&h).unwrap();
        let w = thermal_weights(&eig, 2.0, 1e-12).unwrap();
        let k = InitialStateKernel::from_eigen(&h, &basis, &eig, &w);
        let m = k.moments(&potential_delta(&cfg, &cfg, 4));
        assert_eq!(m, KernelMoments::default());
    }
}
