#![allow(dead_code)]

use hubbard_quench::basis::SectorBasis;
use hubbard_quench::hamiltonian::{
    build_hamiltonian, potential_delta, Boundary, ImpurityConfig, LatticeSpec, PotentialDelta, SparseHamiltonian,
};
use hubbard_quench::spectra::{diagonalize, thermal_weights, EigenSystem, ThermalWeights};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random quench on a small chain, fully diagonalized on both sides.
pub struct Instance {
    pub lattice: LatticeSpec,
    pub basis: SectorBasis,
    pub initial: ImpurityConfig,
    pub final_: ImpurityConfig,
    pub delta: PotentialDelta,
    pub h0: SparseHamiltonian,
    pub hf: SparseHamiltonian,
    pub eig0: EigenSystem,
    pub eigf: EigenSystem,
    pub temperature: f64,
    pub w0: ThermalWeights,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = rng.random_range(2..=4usize);
    let n_up = rng.random_range(1..=l);
    let n_dn = rng.random_range(1..=l);
    let u = -rng.random_range(0.5..8.0);
    let boundary = if l > 2 && rng.random_bool(0.5) { Boundary::Periodic } else { Boundary::Open };
    let lattice = LatticeSpec::new(l, 1.0, u, boundary);
    let config = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(0..=l);
        let v = -rng.random_range(0.5..12.0);
        ImpurityConfig::new(sample(rng, l, n).into_vec(), v, l).unwrap()
    };
    let initial = config(&mut rng);
    let final_ = config(&mut rng);
    let temperature = [0.0, 1.0, 5.0][rng.random_range(0..3)];
    build_instance(lattice, n_up, n_dn, initial, final_, temperature)
}

pub fn build_instance(
    lattice: LatticeSpec,
    n_up: usize,
    n_dn: usize,
    initial: ImpurityConfig,
    final_: ImpurityConfig,
    temperature: f64,
) -> Instance {
    let l = lattice.sites;
    let basis = SectorBasis::new(l, n_up, n_dn).unwrap();
    let h0 = build_hamiltonian(&lattice, &initial, &basis).unwrap();
    let hf = build_hamiltonian(&lattice, &final_, &basis).unwrap();
    let eig0 = diagonalize(&h0).unwrap();
    let eigf = diagonalize(&hf).unwrap();
    let w0 = thermal_weights(&eig0, temperature, 0.0).unwrap();
    let delta = potential_delta(&initial, &final_, l);
    Instance { lattice, basis, initial, final_, delta, h0, hf, eig0, eigf, temperature, w0 }
}

/// Column-major dense matrix helpers used as an independent reference.
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn from_sparse(h: &SparseHamiltonian) -> Self {
        Self { n: h.dim(), a: h.to_dense() }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = d[i];
        }
        Self { n, a }
    }

    pub fn density(eig: &EigenSystem, w: &ThermalWeights) -> Self {
        let n = eig.dim();
        let mut a = vec![0.0; n * n];
        for (k, p) in w.iter() {
            let v = eig.vector(k);
            for j in 0..n {
                for i in 0..n {
                    a[j * n + i] += p * v[i] * v[j];
                }
            }
        }
        Self { n, a }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.n + i]
    }

    pub fn mul(&self, o: &Dense) -> Dense {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let b = o.get(k, j);
                if b == 0.0 {
                    continue;
                }
                for i in 0..n {
                    a[j * n + i] += self.get(i, k) * b;
                }
            }
        }
        Dense { n, a }
    }

    pub fn sub(&self, o: &Dense) -> Dense {
        Dense { n: self.n, a: self.a.iter().zip(&o.a).map(|(x, y)| x - y).collect() }
    }

    pub fn scaled_identity_sub(&self, s: f64) -> Dense {
        let mut out = Dense { n: self.n, a: self.a.clone() };
        for i in 0..self.n {
            out.a[i * self.n + i] -= s;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// `ΔH` as a diagonal matrix in the occupation basis.
pub fn delta_operator(inst: &Instance) -> Dense {
    let occ = inst.basis.occupations();
    let l = inst.basis.sites();
    let d: Vec<f64> = (0..inst.basis.dim()).map(|k| inst.delta.on_occupations(&occ[k * l..(k + 1) * l])).collect();
    Dense::diagonal(&d)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
