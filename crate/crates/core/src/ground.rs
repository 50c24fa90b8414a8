//! Low-lying eigenpairs of a sparse Hamiltonian by Chebyshev-filtered subspace
//! iteration.
//!
//! Strong impurities produce clusters of nearly degenerate levels (pairs
//! parked on distant impurity sites barely tunnel), which single-vector
//! Krylov methods cannot resolve. Filtering a whole block and doing a
//! Rayleigh–Ritz step on it converges the entire low cluster at a rate set by
//! the gap above the block, and resolves splittings inside the cluster
//! exactly once the block spans it.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hamiltonian::SparseHamiltonian;
use crate::spectra::{symmetric_eigen, SpectraError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceOptions {
    /// Block width; grown automatically when the ground cluster fills half of it.
    pub block: usize,
    pub filter_degree: usize,
    /// Residual tolerance relative to `max(1, |θ|)`.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Below this dimension the dense solver is used directly.
    pub dense_below: usize,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self { block: 48, filter_degree: 24, tol: 1e-10, max_iterations: 400, seed: 0x5eed_0f_9a0d, dense_below: 400 }
    }
}

/// Ground energy, the eigenvectors of the degenerate ground cluster and the
/// gap to the next level.
#[derive(Debug, Clone)]
pub struct GroundManifold {
    pub energies: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub gap: f64,
    pub max_residual: f64,
    pub iterations: usize,
}

impl GroundManifold {
    pub fn energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn degeneracy(&self) -> usize {
        self.vectors.len()
    }
}

pub fn ground_manifold(
    h: &SparseHamiltonian,
    degeneracy_tol: f64,
    opts: &SubspaceOptions,
) -> Result<GroundManifold, SpectraError> {
    let n = h.dim();
    if n <= opts.dense_below.max(2 * opts.block) {
        return dense_ground(h, degeneracy_tol);
    }
    let mut block = opts.block.max(4);
    loop {
        match filtered_subspace(h, degeneracy_tol, opts, block)? {
            Some(g) => return Ok(g),
            None if 4 * block < n => block *= 2,
            None => return dense_ground(h, degeneracy_tol),
        }
    }
}

fn dense_ground(h: &SparseHamiltonian, degeneracy_tol: f64) -> Result<GroundManifold, SpectraError> {
    let eig = symmetric_eigen(&h.to_dense(), h.dim())?;
    let values = eig.values();
    let g = values.iter().take_while(|&&e| e - values[0] <= degeneracy_tol).count();
    let gap = values.get(g).map_or(f64::INFINITY, |e| e - values[0]);
    Ok(GroundManifold {
        energies: values[..g].to_vec(),
        vectors: (0..g).map(|k| eig.vector(k).to_vec()).collect(),
        gap,
        max_residual: 0.0,
        iterations: 0,
    })
}

fn to_row_major(m: &Mat<f64>) -> Vec<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = vec![0.0; r * c];
    for j in 0..c {
        let col = m.col(j);
        for i in 0..r {
            out[i * c + j] = col[i];
        }
    }
    out
}

fn from_row_major(x: &[f64], rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| x[i * cols + j])
}

fn orthonormalize(x: &Mat<f64>) -> Mat<f64> {
    // two passes keep the basis orthonormal to working precision
    let q = x.qr().compute_thin_Q();
    q.qr().compute_thin_Q()
}

/// Returns `None` when the ground cluster is too large for `block`.
fn filtered_subspace(
    h: &SparseHamiltonian,
    degeneracy_tol: f64,
    opts: &SubspaceOptions,
    block: usize,
) -> Result<Option<GroundManifold>, SpectraError> {
    let n = h.dim();
    let m = block;
    let (_, upper) = h.spectral_bounds();

    // start from the determinants with the lowest diagonal energy
    let diag = h.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x0 = Mat::<f64>::from_fn(n, m, |_, _| 0.0);
    for j in 0..m {
        for i in 0..n {
            x0[(i, j)] = 1e-2 * (rng.random::<f64>() - 0.5);
        }
        x0[(order[j], j)] += 1.0;
    }
    let mut x = orthonormalize(&x0);

    let mut hx_rm = vec![0.0; n * m];
    let mut buf_a = vec![0.0; n * m];
    let mut buf_b = vec![0.0; n * m];
    let mut buf_c = vec![0.0; n * m];

    for iteration in 1..=opts.max_iterations {
        // Rayleigh–Ritz
        let x_rm = to_row_major(&x);
        h.apply_block(&x_rm, &mut hx_rm, m);
        let hx = from_row_major(&hx_rm, n, m);
        let g = x.transpose() * &hx;
        let mut gs = vec![0.0; m * m];
        for j in 0..m {
            for i in 0..m {
                gs[j * m + i] = 0.5 * (g[(i, j)] + g[(j, i)]);
            }
        }
        let small = symmetric_eigen(&gs, m)?;
        let q = Mat::<f64>::from_fn(m, m, |i, j| small.vector(j)[i]);
        x = &x * &q;
        let hx = &hx * &q;
        let theta = small.values();

        let residual = |k: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                let r = hx[(i, k)] - theta[k] * x[(i, k)];
                s += r * r;
            }
            s.sqrt()
        };
        let cluster = theta.iter().take_while(|&&e| e - theta[0] <= degeneracy_tol).count();
        let need = cluster + 1;
        if need > m / 2 {
            return Ok(None);
        }
        let residuals: Vec<f64> = (0..need).map(residual).collect();
        let converged = residuals.iter().zip(theta).all(|(r, t)| *r <= opts.tol * t.abs().max(1.0));
        if converged {
            let vectors = (0..cluster).map(|k| x.col(k).iter().copied().collect()).collect();
            return Ok(Some(GroundManifold {
                energies: theta[..cluster].to_vec(),
                vectors,
                gap: theta[cluster] - theta[0],
                max_residual: residuals.iter().copied().fold(0.0, f64::max),
                iterations: iteration,
            }));
        }

        // damped Chebyshev filter on [θ_{m-1}, upper], scaled at θ_0
        let cut = theta[m - 1];
        let low = theta[0];
        if !(upper > cut) {
            return Ok(None);
        }
        let e = (upper - cut) / 2.0;
        let c = (upper + cut) / 2.0;
        let mut sigma = e / (low - c);
        let tau = 2.0 / sigma;
        let x_rm = to_row_major(&x);
        buf_a.copy_from_slice(&x_rm);
        h.apply_block_affine(&buf_a, &mut buf_b, m, sigma / e, c, None, 0.0);
        // buf_a = previous, buf_b = current
        for _ in 2..=opts.filter_degree {
            let sigma_new = 1.0 / (tau - sigma);
            h.apply_block_affine(&buf_b, &mut buf_c, m, 2.0 * sigma_new / e, c, Some(&buf_a), -sigma * sigma_new);
            std::mem::swap(&mut buf_a, &mut buf_b);
            std::mem::swap(&mut buf_b, &mut buf_c);
            sigma = sigma_new;
        }
        x = orthonormalize(&from_row_major(&buf_b, n, m));
    }
    Err(SpectraError::NoConvergence(format!(
        "subspace iteration did not converge in {} iterations",
        opts.max_iterations
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::SectorBasis;
    use crate::hamiltonian::{build_hamiltonian, ImpurityConfig, LatticeSpec};
    use crate::spectra::diagonalize;

    fn check_against_dense(sites: usize, nu: usize, nd: usize, imp: Vec<usize>, v: f64) {
        let basis = SectorBasis::new(sites, nu, nd).unwrap();
        let cfg = ImpurityConfig::new(imp, v, sites).unwrap();
        let h = build_hamiltonian(&LatticeSpec::open(sites, -5.0), &cfg, &basis).unwrap();
        let opts = SubspaceOptions { block: 16, dense_below: 0, ..Default::default() };
        let g = ground_manifold(&h, 1e-8, &opts).unwrap();
        let eig = diagonalize(&h).unwrap();
        assert!((g.energy() - eig.values()[0]).abs() < 1e-9, "{} vs {}", g.energy(), eig.values()[0]);
        let gd = eig.values().iter().take_while(|&&e| e - eig.values()[0] <= 1e-8).count();
        assert_eq!(g.degeneracy(), gd);
        // projector onto the cluster agrees
        for k in 0..gd {
            let dv = eig.vector(k);
            let proj: f64 = g.vectors.iter().map(|v| v.iter().zip(dv).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum();
            assert!((proj - 1.0).abs() < 1e-9, "projection {proj}");
        }
    }

    #[test]
    fn matches_dense_ground_state() {
        check_against_dense(6, 3, 3, vec![1, 4], -3.0);
        check_against_dense(6, 3, 3, vec![], 0.0);
        check_against_dense(6, 2, 3, vec![0, 5], -7.0);
    }

    #[test]
    fn resolves_near_degenerate_cluster() {
        // two far-apart strong impurities, one pair: the pair sits on either
        // site with an exponentially small splitting
        check_against_dense(6, 1, 1, vec![0, 5], -20.0);
        check_against_dense(7, 2, 2, vec![0, 3, 6], -20.0);
    }
}
