mod common;

use common::{delta_operator, random_instance, rel_close, Dense};
use hubbard_quench::kernel::InitialStateKernel;
use hubbard_quench::spectra::log_partition;
use hubbard_quench::workstats::{
    correlator_mean, correlator_mu3, correlator_variance, jarzynski_residual, mu3_discrepancy, spectral_moments,
    tpm_distribution, tpm_distribution_with_floor,
};

#[test]
fn spectral_moments_match_distribution_sums() {
    for seed in 0..20 {
        let inst = random_instance(seed);
        let dist = tpm_distribution(&inst.eig0, &inst.eigf, &inst.w0, 1e-9).unwrap();
        let hist = dist.moments();
        let spec = spectral_moments(&inst.eig0, &inst.w0, &inst.hf, 4).unwrap();
        assert!(rel_close(hist.mean, spec.mean, 1e-8), "seed {seed}: {hist:?} {spec:?}");
        assert!(rel_close(hist.variance, spec.variance, 1e-8), "seed {seed}");
        assert!(rel_close(hist.mu3, spec.mu3, 1e-8), "seed {seed}");
        assert!(rel_close(hist.mu4.unwrap(), spec.mu4.unwrap(), 1e-8), "seed {seed}");
    }
}

#[test]
fn correlator_route_matches_dense_operator_algebra() {
    for seed in 100..130 {
        let inst = random_instance(seed);
        let rho = Dense::density(&inst.eig0, &inst.w0);
        let d = delta_operator(&inst);
        let mean = rho.mul(&d).trace();
        let dc = d.scaled_identity_sub(mean);
        let var = rho.mul(&dc).mul(&dc).trace();
        let mu3 = rho.mul(&dc).mul(&dc).mul(&dc).trace();
        let cm = correlator_mean(&inst.w0, &inst.eig0, &inst.delta, &inst.basis).unwrap();
        let cv = correlator_variance(&inst.w0, &inst.eig0, &inst.delta, &inst.basis).unwrap();
        let c3 = correlator_mu3(&inst.w0, &inst.eig0, &inst.delta, &inst.basis).unwrap();
        assert!(rel_close(cm, mean, 1e-10), "seed {seed}");
        assert!(rel_close(cv, var, 1e-10), "seed {seed}");
        assert!(rel_close(c3, mu3, 1e-9), "seed {seed}");

        let spec = spectral_moments(&inst.eig0, &inst.w0, &inst.hf, 3).unwrap();
        assert!(rel_close(spec.mean, cm, 1e-9), "seed {seed}");
        assert!(rel_close(spec.variance, cv, 1e-9), "seed {seed}");

        // δ₃ = Tr[ρ (D H₀ D − H₀ D²)] by dense products
        let h0 = Dense::from_sparse(&inst.h0);
        let identity = rho.mul(&d.mul(&h0).mul(&d).sub(&h0.mul(&d).mul(&d))).trace();
        let disc = mu3_discrepancy(&inst.eig0, &inst.w0, &inst.h0, &inst.hf, &inst.delta, &inst.basis).unwrap();
        assert!(rel_close(disc.identity, identity, 1e-9), "seed {seed}");
        assert!(disc.identity_holds(1e-8), "seed {seed}: {disc:?}");
    }
}

#[test]
fn kernel_reproduces_tpm_moments() {
    for seed in 200..240 {
        let inst = random_instance(seed);
        let k = InitialStateKernel::from_eigen(&inst.h0, &inst.basis, &inst.eig0, &inst.w0);
        let m = k.moments(&inst.delta);
        let spec = spectral_moments(&inst.eig0, &inst.w0, &inst.hf, 3).unwrap();
        assert!(rel_close(m.mean, spec.mean, 1e-9), "seed {seed}");
        assert!(rel_close(m.variance, spec.variance, 1e-9), "seed {seed}");
        assert!(rel_close(m.mu3, spec.mu3, 1e-8), "seed {seed}: {m:?} {spec:?}");
        let c3 = correlator_mu3(&inst.w0, &inst.eig0, &inst.delta, &inst.basis).unwrap();
        assert!(rel_close(m.mu3_correlator, c3, 1e-9), "seed {seed}");
    }
}

#[test]
fn jarzynski_equality_holds() {
    let mut checked = 0;
    for seed in 300..340 {
        let inst = random_instance(seed);
        if inst.temperature == 0.0 {
            continue;
        }
        let dist = tpm_distribution_with_floor(&inst.eig0, &inst.eigf, &inst.w0, 1e-9, 0.0).unwrap();
        let lz0 = log_partition(inst.eig0.values(), inst.temperature);
        let lzf = log_partition(inst.eigf.values(), inst.temperature);
        let r = jarzynski_residual(&dist, inst.temperature, lz0, lzf);
        assert!(r <= 1e-8, "seed {seed}: residual {r:e}");
        checked += 1;
    }
    assert!(checked > 10);
}
