//! Two-point-measurement work statistics of a sudden quench `H₀ → H_f`.
//!
//! Three independent routes are provided:
//!
//! * [`tpm_distribution`] builds `P(W)` from the overlaps of both eigenbases;
//! * [`spectral_moments`] obtains moments from `⟨n|(H_f − ε_n)^k|n⟩` with sparse
//!   products, never forming `P(W)`;
//! * the correlator functions evaluate the first three moments of `ΔH` from
//!   density correlators of the initial state.
//!
//! The first two routes agree at every order. The correlator route agrees with
//! them for the mean and the variance, and differs at third order by
//! `δ₃ = Tr[ρ₀(D H₀ D − H₀ D²)]`.

use std::io::Write;

use thiserror::Error;

use crate::basis::SectorBasis;
use crate::hamiltonian::{PotentialDelta, SparseHamiltonian};
use crate::observables::{density_correlators, occupation_probabilities, ObservableError};
use crate::spectra::{EigenSystem, ThermalWeights};

pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
/// Individual transition probabilities below this are dropped from `P(W)`.
pub const PAIR_PROBABILITY_FLOOR: f64 = 1e-16;

#[derive(Debug, Error)]
pub enum WorkError {
    #[error("basis mismatch: initial dimension {initial}, final dimension {final_}")]
    BasisMismatch { initial: usize, final_: usize },
    #[error("moment order {0} outside 1..=4")]
    InvalidOrder(usize),
    #[error("potential delta has {got} sites, lattice has {expected}")]
    SiteMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Discrete work distribution with strictly increasing support.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkDistribution {
    pub points: Vec<(f64, f64)>,
    pub merge_tol: f64,
    pub truncation_mass: f64,
}

impl WorkDistribution {
    pub fn total_probability(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Moments by direct summation over the support. Normalised by the retained
    /// probability so that truncated distributions stay comparable.
    pub fn moments(&self) -> MomentSet {
        let norm = self.total_probability();
        let mean = self.points.iter().map(|(w, p)| w * p).sum::<f64>() / norm;
        let central = |k: i32| self.points.iter().map(|(w, p)| p * (w - mean).powi(k)).sum::<f64>() / norm;
        MomentSet::from_central(mean, central(2), central(3), Some(central(4)))
    }

    /// `⟨e^{−W/T}⟩`
    pub fn exponential_average(&self, temperature: f64) -> f64 {
        self.points.iter().map(|(w, p)| p * (-w / temperature).exp()).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), WorkError> {
        writeln!(out, "w,p")?;
        for (w, p) in &self.points {
            writeln!(out, "{w},{p}")?;
        }
        Ok(())
    }
}

fn merge_sorted(mut raw: Vec<(f64, f64)>, merge_tol: f64) -> Vec<(f64, f64)> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    loop {
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (w, p) in raw.iter().copied() {
            match merged.last_mut() {
                Some(last) if w - last.0 <= merge_tol => {
                    let total = last.1 + p;
                    last.0 = (last.0 * last.1 + w * p) / total;
                    last.1 = total;
                }
                _ => merged.push((w, p)),
            }
        }
        if merged.len() == raw.len() {
            return merged;
        }
        raw = merged;
    }
}

/// `P(W) = Σ_{n,m} p_n |⟨m_f|n_0⟩|² δ(W − (ε_m^f − ε_n^0))`.
pub fn tpm_distribution(
    eig0: &EigenSystem,
    eigf: &EigenSystem,
    w0: &ThermalWeights,
    merge_tol: f64,
) -> Result<WorkDistribution, WorkError> {
    tpm_distribution_with_floor(eig0, eigf, w0, merge_tol, PAIR_PROBABILITY_FLOOR)
}

/// As [`tpm_distribution`] with an explicit per-transition probability floor.
///
/// Exponential averages such as `⟨e^{−W/T}⟩` weight the far negative tail by
/// up to `e^{|W|/T}`, so they need `floor = 0`.
pub fn tpm_distribution_with_floor(
    eig0: &EigenSystem,
    eigf: &EigenSystem,
    w0: &ThermalWeights,
    merge_tol: f64,
    floor: f64,
) -> Result<WorkDistribution, WorkError> {
    let dim = eig0.dim();
    if eigf.dim() != dim {
        return Err(WorkError::BasisMismatch { initial: dim, final_: eigf.dim() });
    }
    let mut raw = Vec::new();
    let mut dropped = 0.0;
    for (n, pn) in w0.iter() {
        let v = eig0.vector(n);
        let e0 = eig0.values()[n];
        for m in 0..dim {
            let overlap: f64 = eigf.vector(m).iter().zip(v).map(|(a, b)| a * b).sum();
            let p = pn * overlap * overlap;
            if p < floor || p == 0.0 {
                dropped += p;
            } else {
                raw.push((eigf.values()[m] - e0, p));
            }
        }
    }
    Ok(WorkDistribution {
        points: merge_sorted(raw, merge_tol),
        merge_tol,
        truncation_mass: w0.truncation_mass() + dropped,
    })
}

/// Mean, central and raw moments up to third (optionally fourth) order.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentSet {
    pub mean: f64,
    pub variance: f64,
    pub mu3: f64,
    pub raw2: f64,
    pub raw3: f64,
    pub mu4: Option<f64>,
    pub raw4: Option<f64>,
}

impl MomentSet {
    pub fn from_central(mean: f64, variance: f64, mu3: f64, mu4: Option<f64>) -> Self {
        let raw2 = variance + mean * mean;
        let raw3 = mu3 + 3.0 * mean * raw2 - 2.0 * mean.powi(3);
        let raw4 = mu4.map(|c4| c4 + 4.0 * mean * raw3 - 6.0 * mean * mean * raw2 + 3.0 * mean.powi(4));
        Self { mean, variance, mu3, raw2, raw3, mu4, raw4 }
    }

    pub fn zero() -> Self {
        Self::from_central(0.0, 0.0, 0.0, Some(0.0))
    }
}

/// Moments of the TPM distribution from `⟨n|(H_f − ε_n − ⟨W⟩)^k|n⟩`.
///
/// Valid because `ρ₀` is diagonal in the eigenbasis of `H₀`. Orders above
/// `max_order` are reported as zero (order ≤ 3) or `None` (order 4).
pub fn spectral_moments(
    eig0: &EigenSystem,
    w0: &ThermalWeights,
    h_final: &SparseHamiltonian,
    max_order: usize,
) -> Result<MomentSet, WorkError> {
    if !(1..=4).contains(&max_order) {
        return Err(WorkError::InvalidOrder(max_order));
    }
    let dim = eig0.dim();
    if h_final.dim() != dim {
        return Err(WorkError::BasisMismatch { initial: dim, final_: h_final.dim() });
    }
    let norm: f64 = w0.iter().map(|(_, p)| p).sum();
    let mut hv = vec![0.0; dim];
    let mut mean = 0.0;
    for (n, p) in w0.iter() {
        let v = eig0.vector(n);
        h_final.apply(v, &mut hv);
        let e: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>() - eig0.values()[n];
        mean += p * e;
    }
    mean /= norm;
    if max_order == 1 {
        return Ok(MomentSet::from_central(mean, 0.0, 0.0, None));
    }
    let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
    let mut psi = vec![0.0; dim];
    let mut phi = vec![0.0; dim];
    for (n, p) in w0.iter() {
        let v = eig0.vector(n);
        let shift = eig0.values()[n] + mean;
        h_final.apply(v, &mut hv);
        for k in 0..dim {
            psi[k] = hv[k] - shift * v[k];
        }
        c2 += p * psi.iter().map(|a| a * a).sum::<f64>();
        if max_order >= 3 {
            h_final.apply(&psi, &mut phi);
            for k in 0..dim {
                phi[k] -= shift * psi[k];
            }
            c3 += p * psi.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>();
            c4 += p * phi.iter().map(|a| a * a).sum::<f64>();
        }
    }
    let (c2, c3, c4) = (c2 / norm, c3 / norm, c4 / norm);
    Ok(MomentSet::from_central(mean, c2, if max_order >= 3 { c3 } else { 0.0 }, (max_order == 4).then_some(c4)))
}

fn check_sites(delta: &PotentialDelta, basis: &SectorBasis) -> Result<(), WorkError> {
    if delta.sites() != basis.sites() {
        return Err(WorkError::SiteMismatch { got: delta.sites(), expected: basis.sites() });
    }
    Ok(())
}

fn initial_probabilities(w0: &ThermalWeights, eig0: &EigenSystem) -> Vec<f64> {
    let mut p = occupation_probabilities(eig0, w0);
    let norm: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= norm);
    p
}

/// `Σ_j Δv_j ⟨n̂_j⟩`
pub fn correlator_mean(
    w0: &ThermalWeights,
    eig0: &EigenSystem,
    delta: &PotentialDelta,
    basis: &SectorBasis,
) -> Result<f64, WorkError> {
    check_sites(delta, basis)?;
    let c = density_correlators(&initial_probabilities(w0, eig0), basis, 1)?;
    Ok(delta.delta_v.iter().enumerate().map(|(j, d)| d * c.one(j)).sum())
}

/// `Σ_{jℓ} Δv_j Δv_ℓ (⟨n̂_j n̂_ℓ⟩ − ⟨n̂_j⟩⟨n̂_ℓ⟩)`
pub fn correlator_variance(
    w0: &ThermalWeights,
    eig0: &EigenSystem,
    delta: &PotentialDelta,
    basis: &SectorBasis,
) -> Result<f64, WorkError> {
    check_sites(delta, basis)?;
    let c = density_correlators(&initial_probabilities(w0, eig0), basis, 2)?;
    let dv = &delta.delta_v;
    let l = basis.sites();
    let mut s = 0.0;
    for j in 0..l {
        for m in 0..l {
            s += dv[j] * dv[m] * c.connected_two(j, m);
        }
    }
    Ok(s)
}

/// `Σ_{jℓm} Δv_j Δv_ℓ Δv_m (⟨n̂_j n̂_ℓ n̂_m⟩ − 3⟨n̂_j n̂_ℓ⟩⟨n̂_m⟩ + 2⟨n̂_j⟩⟨n̂_ℓ⟩⟨n̂_m⟩)`
pub fn correlator_mu3(
    w0: &ThermalWeights,
    eig0: &EigenSystem,
    delta: &PotentialDelta,
    basis: &SectorBasis,
) -> Result<f64, WorkError> {
    check_sites(delta, basis)?;
    let c = density_correlators(&initial_probabilities(w0, eig0), basis, 3)?;
    let dv = &delta.delta_v;
    let l = basis.sites();
    let mut s = 0.0;
    for j in 0..l {
        for m in 0..l {
            for r in 0..l {
                let t = c.three(j, m, r) - 3.0 * c.two(j, m) * c.one(r) + 2.0 * c.one(j) * c.one(m) * c.one(r);
                s += dv[j] * dv[m] * dv[r] * t;
            }
        }
    }
    Ok(s)
}

/// `⟨(ΔH − ⟨ΔH⟩)^k⟩` for a state described by its occupation probabilities.
pub fn operator_central_moment(
    probs: &[f64],
    basis: &SectorBasis,
    delta: &PotentialDelta,
    order: i32,
) -> Result<f64, WorkError> {
    check_sites(delta, basis)?;
    let occ = basis.occupations();
    let l = basis.sites();
    let d = |k: usize| delta.on_occupations(&occ[k * l..(k + 1) * l]);
    let mean: f64 = probs.iter().enumerate().map(|(k, p)| p * d(k)).sum();
    Ok(probs.iter().enumerate().map(|(k, p)| p * (d(k) - mean).powi(order)).sum())
}

/// `δ₃` measured as the difference of the two routes, next to the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mu3Discrepancy {
    pub mu3_tpm: f64,
    pub mu3_correlator: f64,
    pub delta3: f64,
    /// `Tr[ρ₀(D H₀ D − H₀ D²)]`
    pub identity: f64,
}

impl Mu3Discrepancy {
    pub fn identity_residual(&self) -> f64 {
        (self.delta3 - self.identity).abs()
    }

    pub fn identity_holds(&self, rel_tol: f64) -> bool {
        let scale = self.mu3_tpm.abs().max(self.mu3_correlator.abs()).max(1.0);
        self.identity_residual() <= rel_tol * scale
    }
}

pub fn mu3_discrepancy(
    eig0: &EigenSystem,
    w0: &ThermalWeights,
    h_initial: &SparseHamiltonian,
    h_final: &SparseHamiltonian,
    delta: &PotentialDelta,
    basis: &SectorBasis,
) -> Result<Mu3Discrepancy, WorkError> {
    let mu3_tpm = spectral_moments(eig0, w0, h_final, 3)?.mu3;
    let mu3_correlator = correlator_mu3(w0, eig0, delta, basis)?;
    let occ = basis.occupations();
    let l = basis.sites();
    let dim = basis.dim();
    let dk: Vec<f64> = (0..dim).map(|k| delta.on_occupations(&occ[k * l..(k + 1) * l])).collect();
    let mut dv = vec![0.0; dim];
    let mut hdv = vec![0.0; dim];
    let mut hv = vec![0.0; dim];
    let norm: f64 = w0.iter().map(|(_, p)| p).sum();
    let mut identity = 0.0;
    for (n, p) in w0.iter() {
        let v = eig0.vector(n);
        for k in 0..dim {
            dv[k] = dk[k] * v[k];
        }
        h_initial.apply(&dv, &mut hdv);
        h_initial.apply(v, &mut hv);
        // ⟨n|D H₀ D|n⟩ − ⟨n|H₀ D²|n⟩
        let dhd: f64 = dv.iter().zip(&hdv).map(|(a, b)| a * b).sum();
        let hdd: f64 = (0..dim).map(|k| hv[k] * dk[k] * dv[k]).sum();
        identity += p * (dhd - hdd);
    }
    identity /= norm;
    Ok(Mu3Discrepancy { mu3_tpm, mu3_correlator, delta3: mu3_tpm - mu3_correlator, identity })
}

/// `|⟨e^{−W/T}⟩ − Z_f/Z₀| / max(1, Z_f/Z₀)`
///
/// Absolute for ratios of order one, relative once `Z_f/Z₀` is large (deep
/// final potentials easily push it past `10¹⁶`).
pub fn jarzynski_residual(dist: &WorkDistribution, temperature: f64, log_z0: f64, log_zf: f64) -> f64 {
    let ratio = (log_zf - log_z0).exp();
    (dist.exponential_average(temperature) - ratio).abs() / ratio.max(1.0)
}
