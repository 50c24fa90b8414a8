use hubbard_quench::basis::{binomial, SectorBasis};
use hubbard_quench::hamiltonian::{build_hamiltonian, Boundary, ImpurityConfig, LatticeSpec};
use hubbard_quench::spectra::diagonalize;
use proptest::prelude::*;

fn model() -> impl Strategy<Value = (usize, usize, usize, f64, bool, Vec<bool>, f64)> {
    (2usize..=5).prop_flat_map(|l| {
        (Just(l), 0..=l, 0..=l, -8.0f64..2.0, any::<bool>(), proptest::collection::vec(any::<bool>(), l), -12.0f64..0.0)
    })
}

fn impurities(flags: &[bool], v: f64) -> ImpurityConfig {
    let sites: Vec<usize> = flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect();
    ImpurityConfig::new(sites, v, flags.len()).unwrap()
}

/// All sums of `n` distinct entries of `levels`.
fn subset_sums(levels: &[f64], n: usize) -> Vec<f64> {
    let l = levels.len();
    (0u32..1 << l)
        .filter(|m| m.count_ones() as usize == n)
        .map(|m| (0..l).filter(|&i| m & (1 << i) != 0).map(|i| levels[i]).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_symmetric_with_combinatorial_trace((l, nu, nd, u, periodic, flags, v) in model()) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
        let lat = LatticeSpec::new(l, 1.0, u, boundary);
        let basis = SectorBasis::new(l, nu, nd).unwrap();
        let imp = impurities(&flags, v);
        let h = build_hamiltonian(&lat, &imp, &basis).unwrap();
        let n = h.dim();
        let dense = h.to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(dense[i * n + j], dense[j * n + i]);
            }
        }
        // Σ_k ⟨k|H|k⟩ counted site by site: each site is doubly occupied in
        // C(L−1, N↑−1)·C(L−1, N↓−1) states and singly counted per spin likewise.
        let c = |a: usize, b: usize| if b == 0 { 0.0 } else { binomial(a - 1, b - 1) as f64 };
        let dup = c(l, nu) * c(l, nd);
        let n_site = c(l, nu) * binomial(l, nd) as f64 + binomial(l, nu) as f64 * c(l, nd);
        let expected = u * l as f64 * dup + imp.sites().len() as f64 * v * n_site;
        let trace: f64 = (0..n).map(|i| dense[i * n + i]).sum();
        prop_assert!((trace - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{} vs {}", trace, expected);
    }

    #[test]
    fn noninteracting_spectrum_is_a_sum_of_orbital_energies(l in 2usize..=5, nu in 0usize..=5, nd in 0usize..=5, periodic: bool, shift in -6.0f64..0.0) {
        prop_assume!(nu <= l && nd <= l);
        let boundary = if periodic && l > 2 { Boundary::Periodic } else { Boundary::Open };
        let lat = LatticeSpec::new(l, 1.0, 0.0, boundary);
        let basis = SectorBasis::new(l, nu, nd).unwrap();
        // uniform potential on every site only shifts each orbital
        let all = ImpurityConfig::new((0..l).collect(), shift, l).unwrap();
        let h = build_hamiltonian(&lat, &all, &basis).unwrap();
        let got = diagonalize(&h).unwrap().values().to_vec();
        let pi = std::f64::consts::PI;
        let levels: Vec<f64> = (0..l)
            .map(|k| {
                let e = match boundary {
                    Boundary::Open => -2.0 * (pi * (k + 1) as f64 / (l + 1) as f64).cos(),
                    Boundary::Periodic => -2.0 * (2.0 * pi * k as f64 / l as f64).cos(),
                };
                e + shift
            })
            .collect();
        let mut want: Vec<f64> = subset_sums(&levels, nu)
            .iter()
            .flat_map(|a| subset_sums(&levels, nd).into_iter().map(move |b| a + b))
            .collect();
        want.sort_by(f64::total_cmp);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-10, "{} vs {}", g, w);
        }
    }
}

#[test]
fn two_site_ring_equals_open_dimer() {
    let basis = SectorBasis::new(2, 1, 1).unwrap();
    let imp = ImpurityConfig::new(vec![1], -2.0, 2).unwrap();
    let open = build_hamiltonian(&LatticeSpec::new(2, 1.0, -5.0, Boundary::Open), &imp, &basis).unwrap();
    let ring = build_hamiltonian(&LatticeSpec::new(2, 1.0, -5.0, Boundary::Periodic), &imp, &basis).unwrap();
    assert_eq!(open.to_dense(), ring.to_dense());
}
