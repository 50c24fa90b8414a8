//! Gibbs density matrix `ρ = e^{−H/T} / Z` restricted to the sparsity pattern
//! of `H`.
//!
//! Every quantity the quench statistics need from a thermal initial state is a
//! trace of `ρ` against an operator that is either diagonal in the occupation
//! basis or shares the hopping pattern of `H`. Those entries are obtained from
//! a Chebyshev expansion of the exponential applied to blocks of unit vectors,
//! which avoids the full eigendecomposition.

use crate::hamiltonian::SparseHamiltonian;
use crate::spectra::{EigenSystem, SpectraError, ThermalWeights};

/// Entries of a density matrix on the diagonal and on the hopping pattern of
/// the Hamiltonian it was built from.
#[derive(Debug, Clone)]
pub struct PatternDensity {
    /// `ρ(k, k)`
    pub diag: Vec<f64>,
    /// `ρ(k, k')` aligned with the hopping CSR rows of the Hamiltonian.
    pub offdiag: Vec<f64>,
    /// `ln Z` for thermal states.
    pub log_partition: Option<f64>,
    pub temperature: f64,
}

impl PatternDensity {
    /// Weighted mixture of orthonormal vectors, `ρ = Σ_a w_a |ψ_a⟩⟨ψ_a|`.
    pub fn from_vectors(h: &SparseHamiltonian, vectors: &[&[f64]], weights: &[f64]) -> Self {
        let hop = h.hopping();
        let n = h.dim();
        let mut diag = vec![0.0; n];
        let mut offdiag = vec![0.0; hop.nnz()];
        for (v, &w) in vectors.iter().zip(weights) {
            let mut pos = 0;
            for k in 0..n {
                let vk = v[k];
                diag[k] += w * vk * vk;
                let (cols, _) = hop.row(k);
                for &c in cols {
                    offdiag[pos] += w * vk * v[c as usize];
                    pos += 1;
                }
            }
        }
        Self { diag, offdiag, log_partition: None, temperature: 0.0 }
    }

    /// Density of an eigenstate ensemble.
    pub fn from_eigen(h: &SparseHamiltonian, eig: &EigenSystem, weights: &ThermalWeights) -> Self {
        let (vecs, ws): (Vec<&[f64]>, Vec<f64>) = weights.iter().map(|(k, p)| (eig.vector(k), p)).unzip();
        let mut out = Self::from_vectors(h, &vecs, &ws);
        out.log_partition = weights.log_partition();
        out.temperature = weights.temperature();
        out
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }
}

/// Exponentially scaled modified Bessel functions `I_k(x)·e^{−x}`, `k = 0..=kmax`.
///
/// Miller's backward recurrence normalised with `I_0 + 2 Σ_{k≥1} I_k = e^x`.
pub fn scaled_bessel_i(x: f64, kmax: usize) -> Vec<f64> {
    assert!(x >= 0.0);
    if x == 0.0 {
        let mut out = vec![0.0; kmax + 1];
        out[0] = 1.0;
        return out;
    }
    let start = kmax.max(x as usize) + 40 + (10.0 * x.sqrt()) as usize;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = (2.0 * k as f64 / x) * vals[k] + vals[k + 1];
        if vals[k - 1] > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm: f64 = vals[0] + 2.0 * vals[1..=start].iter().sum::<f64>();
    vals.truncate(kmax + 1);
    vals.iter_mut().for_each(|v| *v /= norm);
    vals
}

/// Chebyshev coefficients of `e^{−β(x − lower)}` on `[lower, upper]`, truncated
/// once the tail is below `eps`.
fn exp_coefficients(beta: f64, lower: f64, upper: f64, eps: f64) -> Vec<f64> {
    let x = beta * (upper - lower) / 2.0;
    let mut kmax = (x + 30.0 + 12.0 * x.sqrt()) as usize;
    loop {
        let ive = scaled_bessel_i(x, kmax);
        let tail_start = ive.iter().rposition(|&v| v > eps).map_or(1, |p| p + 1);
        if tail_start < kmax {
            let mut coeffs: Vec<f64> = ive[..tail_start.max(1)]
                .iter()
                .enumerate()
                .map(|(k, &v)| if k == 0 { v } else { 2.0 * v * if k % 2 == 1 { -1.0 } else { 1.0 } })
                .collect();
            coeffs.truncate(tail_start.max(1));
            return coeffs;
        }
        kmax *= 2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebyshevOptions {
    /// Number of unit vectors propagated together.
    pub block: usize,
    /// Truncation threshold on the expansion coefficients.
    pub eps: f64,
}

impl Default for ChebyshevOptions {
    fn default() -> Self {
        Self { block: 64, eps: 1e-17 }
    }
}

/// Gibbs state at `temperature > 0` on the pattern of `h`.
///
/// `ground_energy` must not exceed the true ground energy by more than a few
/// units of numerical noise; it sets the scale of the expansion so that the
/// dominant entries of `ρ` are resolved to full relative precision.
pub fn thermal_pattern_density(
    h: &SparseHamiltonian,
    temperature: f64,
    ground_energy: f64,
    opts: &ChebyshevOptions,
) -> Result<PatternDensity, SpectraError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(SpectraError::InvalidTemperature(temperature));
    }
    let beta = 1.0 / temperature;
    let n = h.dim();
    let (_, gersh_hi) = h.spectral_bounds();
    // small margin below the ground energy keeps the spectrum inside the interval
    let lower = ground_energy - 1e-6 * ground_energy.abs().max(1.0);
    let upper = gersh_hi.max(lower + 1e-3);
    let coeffs = exp_coefficients(beta, lower, upper, opts.eps);
    let center = (upper + lower) / 2.0;
    let half = (upper - lower) / 2.0;

    let hop = h.hopping();
    let mut diag = vec![0.0; n];
    let mut offdiag = vec![0.0; hop.nnz()];
    let row_start: Vec<usize> = {
        let mut v = Vec::with_capacity(n + 1);
        let mut acc = 0;
        v.push(0);
        for k in 0..n {
            acc += hop.row(k).0.len();
            v.push(acc);
        }
        v
    };

    let width_max = opts.block.max(1);
    let mut prev = vec![0.0; n * width_max];
    let mut cur = vec![0.0; n * width_max];
    let mut next = vec![0.0; n * width_max];
    let mut acc = vec![0.0; n * width_max];
    let mut col0 = 0;
    while col0 < n {
        let w = width_max.min(n - col0);
        let mut prev: &mut [f64] = &mut prev[..n * w];
        let mut cur: &mut [f64] = &mut cur[..n * w];
        let mut next: &mut [f64] = &mut next[..n * w];
        let acc: &mut [f64] = &mut acc[..n * w];
        prev.fill(0.0);
        for j in 0..w {
            prev[(col0 + j) * w + j] = 1.0;
        }
        // T_0 = I, T_1 = Y with Y = (H − center)/half
        for (a, &p) in acc.iter_mut().zip(prev.iter()) {
            *a = coeffs[0] * p;
        }
        if coeffs.len() > 1 {
            h.apply_block_affine(prev, cur, w, 1.0 / half, center, None, 0.0);
            for (a, &c) in acc.iter_mut().zip(cur.iter()) {
                *a += coeffs[1] * c;
            }
            for &ck in &coeffs[2..] {
                h.apply_block_affine(cur, next, w, 2.0 / half, center, Some(prev), -1.0);
                for (a, &c) in acc.iter_mut().zip(next.iter()) {
                    *a += ck * c;
                }
                std::mem::swap(&mut prev, &mut cur);
                std::mem::swap(&mut cur, &mut next);
            }
        }
        for j in 0..w {
            let col = col0 + j;
            diag[col] = acc[col * w + j];
            let (cols, _) = hop.row(col);
            for (pos, &r) in (row_start[col]..row_start[col + 1]).zip(cols) {
                offdiag[pos] = acc[r as usize * w + j];
            }
        }
        col0 += w;
    }

    let z: f64 = diag.iter().sum();
    if !(z > 0.0) {
        return Err(SpectraError::NoConvergence("non-positive thermal trace".into()));
    }
    diag.iter_mut().for_each(|v| *v /= z);
    offdiag.iter_mut().for_each(|v| *v /= z);
    Ok(PatternDensity { diag, offdiag, log_partition: Some(z.ln() - beta * lower), temperature })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::SectorBasis;
    use crate::hamiltonian::{build_hamiltonian, ImpurityConfig, LatticeSpec};
    use crate::spectra::{diagonalize, thermal_weights};

    #[test]
    fn bessel_normalisation_and_values() {
        // I_0(1) e^{-1}, I_1(1) e^{-1}, I_2(1) e^{-1}
        let v = scaled_bessel_i(1.0, 5);
        assert!((v[0] - 0.465_759_607_593_640_4).abs() < 1e-15);
        assert!((v[1] - 0.207_910_415_349_708_42).abs() < 1e-15);
        assert!((v[2] - 0.049_938_776_894_223_56).abs() < 1e-15);
        let big = scaled_bessel_i(80.0, 400);
        let total = big[0] + 2.0 * big[1..].iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn matches_dense_gibbs_state() {
        let basis = SectorBasis::new(5, 2, 2).unwrap();
        let cfg = ImpurityConfig::new(vec![0, 3], -4.0, 5).unwrap();
        let h = build_hamiltonian(&LatticeSpec::open(5, -5.0), &cfg, &basis).unwrap();
        let eig = diagonalize(&h).unwrap();
        for t in [0.3, 2.0, 30.0] {
            let w = thermal_weights(&eig, t, 0.0).unwrap();
            let reference = PatternDensity::from_eigen(&h, &eig, &w);
            let cheb = thermal_pattern_density(
                &h,
                t,
                eig.ground_energy(),
                &ChebyshevOptions { block: 7, ..Default::default() },
            )
            .unwrap();
            let err_d = reference.diag.iter().zip(&cheb.diag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let err_o = reference.offdiag.iter().zip(&cheb.offdiag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err_d < 1e-13 && err_o < 1e-13, "T={t}: {err_d:e} {err_o:e}");
            let lz = w.log_partition().unwrap();
            assert!((cheb.log_partition.unwrap() - lz).abs() < 1e-11 * lz.abs().max(1.0));
        }
    }
}
