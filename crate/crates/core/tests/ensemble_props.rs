use hubbard_quench::basis::{binomial, SectorBasis};
use hubbard_quench::ensemble::{protocol_pairs, Ensemble, Pairing, ProtocolSpec, Sampling, SweepOptions};
use hubbard_quench::hamiltonian::{build_hamiltonian, LatticeSpec};
use hubbard_quench::solver::{KernelCache, ProfileSolver, SolverOptions};
use hubbard_quench::spectra::{diagonalize, thermal_weights};
use hubbard_quench::workstats::spectral_moments;

fn ensemble(l: usize, nu: usize, nd: usize, workers: usize, cache: usize, sampling: Sampling) -> Ensemble {
    let solver =
        ProfileSolver::new(LatticeSpec::open(l, -5.0), SectorBasis::new(l, nu, nd).unwrap(), SolverOptions::default())
            .unwrap();
    Ensemble::new(solver, KernelCache::new(cache), workers, SweepOptions { sampling, keep_records: false }).unwrap()
}

#[test]
fn sweeps_do_not_depend_on_workers_or_cache() {
    let temps = [0.0, 1.5];
    let cs = [0.0, 20.0, 40.0, 60.0];
    let run = |workers, cache| {
        let e = ensemble(5, 2, 3, workers, cache, Sampling::Exhaustive);
        let mut rows = e.sweep_concentration(-7.0, Pairing::Resample, &temps, &cs).unwrap();
        rows.extend(e.sweep_potential(&[-1.0, -4.0], -9.0, &temps, &[20.0, 80.0]).unwrap());
        rows
    };
    let reference = run(1, 1000);
    for (workers, cache) in [(2, 1000), (4, 1000), (3, 2), (2, 0)] {
        assert_eq!(run(workers, cache), reference, "workers {workers}, cache {cache}");
    }
}

#[test]
fn sampled_runs_are_reproducible_and_fall_back_to_enumeration() {
    let run = |seed| {
        ensemble(6, 3, 3, 2, 100, Sampling::Sampled { count: 40, seed })
            .sweep_concentration(-6.0, Pairing::Resample, &[0.0], &[0.0, 100.0 / 3.0, 50.0])
            .unwrap()
    };
    let (a, b, c) = (run(9), run(9), run(10));
    assert_eq!(a, b);
    assert_ne!(a, c);
    // C = 0 has only 6 pairs, fewer than requested
    assert!(a[0].exhaustive && a[0].stats.n_pairs == 6);
    assert!(!a[1].exhaustive && a[1].stats.n_pairs == 40);
}

#[test]
fn pair_counts_and_removed_sites() {
    for l in 2..=7usize {
        for ni in 0..l {
            let spec = |pairing| ProtocolSpec::Concentration { strength: -5.0, impurities: ni, pairing };
            let resample = protocol_pairs(&spec(Pairing::Resample), l).unwrap();
            assert_eq!(resample.len() as u128, binomial(l, ni) * binomial(l, ni + 1));
            let superset = protocol_pairs(&spec(Pairing::Superset), l).unwrap();
            assert_eq!(superset.len() as u128, binomial(l, ni) * (l - ni) as u128);
            assert!(superset.iter().all(|p| p.removed_sites() == 0));
            assert!(resample.iter().all(|p| p.removed_sites() <= ni));
        }
    }
}

#[test]
fn ensemble_means_equal_per_pair_spectral_moments() {
    let (l, nu, nd) = (4, 2, 2);
    let lat = LatticeSpec::open(l, -5.0);
    let basis = SectorBasis::new(l, nu, nd).unwrap();
    let temps = [0.0, 2.0];
    let e = ensemble(l, nu, nd, 2, 100, Sampling::Exhaustive);
    for (spec, c) in [
        (ProtocolSpec::Concentration { strength: -8.0, impurities: 1, pairing: Pairing::Resample }, 25.0),
        (ProtocolSpec::Strength { v0: -2.0, vf: -10.0, impurities: 2 }, 50.0),
    ] {
        let pairs = protocol_pairs(&spec, l).unwrap();
        let stats = e.pair_statistics(&pairs, &temps).unwrap();
        for (ti, &t) in temps.iter().enumerate() {
            let (mut m, mut v, mut s) = (0.0, 0.0, 0.0);
            for p in &pairs {
                let h0 = build_hamiltonian(&lat, &p.initial, &basis).unwrap();
                let hf = build_hamiltonian(&lat, &p.final_, &basis).unwrap();
                let eig0 = diagonalize(&h0).unwrap();
                let w0 = thermal_weights(&eig0, t, 0.0).unwrap();
                let mom = spectral_moments(&eig0, &w0, &hf, 3).unwrap();
                m += mom.mean;
                v += mom.variance;
                s += mom.mu3;
            }
            let n = pairs.len() as f64;
            let st = &stats[ti];
            assert_eq!(st.n_pairs, pairs.len());
            assert_eq!(st.removed_counts.values().sum::<usize>(), pairs.len());
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
            assert!(close(st.mean_w, m / n), "C={c} T={t}");
            assert!(close(st.var_w, v / n), "C={c} T={t}");
            assert!(close(st.mu3_w, s / n), "C={c} T={t}: {} vs {}", st.mu3_w, s / n);
        }
    }
}
