//! Self-contained invariant suite run by the `validate` subcommand.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::SectorBasis;
use crate::config::RunConfig;
use crate::critical::{build_critical_state, critical_moment_oracle};
use crate::ensemble::{protocol_pairs, Pairing, ProtocolSpec};
use crate::hamiltonian::{build_hamiltonian, potential_delta, Boundary, ImpurityConfig, LatticeSpec};
use crate::kernel::InitialStateKernel;
use crate::run::{build_ensemble, prepare};
use crate::solver::{ProfileSolver, SolverMode, SolverOptions};
use crate::spectra::{diagonalize, log_partition, thermal_weights};
use crate::workstats::{
    correlator_mean, correlator_variance, jarzynski_residual, mu3_discrepancy, operator_central_moment,
    spectral_moments, tpm_distribution_with_floor,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn dimer_oracle() -> CheckResult {
    let mut worst = 0.0f64;
    for u in [-5.0, -1.0, 0.0, 3.0] {
        let lat = LatticeSpec::open(2, u);
        let basis = SectorBasis::new(2, 1, 1).expect("dimer sector");
        let h = build_hamiltonian(&lat, &ImpurityConfig::empty(0.0), &basis).expect("dimer");
        let got = diagonalize(&h).expect("dense").values().to_vec();
        let root = (u * u + 16.0f64).sqrt();
        let mut want = vec![0.0, u, 0.5 * (u - root), 0.5 * (u + root)];
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    CheckResult::new("dimer spectrum", worst <= 1e-12, format!("max |Δε| = {worst:.2e}"))
}

struct Instance {
    basis: SectorBasis,
    initial: ImpurityConfig,
    final_: ImpurityConfig,
    lattice: LatticeSpec,
    temperature: f64,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = rng.random_range(2..=4usize);
    let n_up = rng.random_range(1..=l);
    let n_dn = rng.random_range(1..=l);
    let u = -rng.random_range(0.5..8.0);
    let boundary = if l > 2 && rng.random_bool(0.5) { Boundary::Periodic } else { Boundary::Open };
    let mut config = || {
        let n = rng.random_range(0..=l);
        let v = -rng.random_range(0.5..12.0);
        ImpurityConfig::new(sample(&mut rng, l, n).into_vec(), v, l).expect("sampled sites")
    };
    let initial = config();
    let final_ = config();
    let temperature = [0.0, 1.0, 5.0][rng.random_range(0..3)];
    Instance {
        basis: SectorBasis::new(l, n_up, n_dn).expect("small sector"),
        initial,
        final_,
        lattice: LatticeSpec::new(l, 1.0, u, boundary),
        temperature,
    }
}

fn route_checks(instances: u64) -> Vec<CheckResult> {
    let (mut mean_err, mut var_err, mut d3_err, mut kernel_err, mut jz_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut thermal = 0;
    let mut failure = None;
    for seed in 0..instances {
        let inst = random_instance(seed);
        let mut run = || -> Result<(), String> {
            let e = |x: &dyn std::fmt::Display| x.to_string();
            let h0 = build_hamiltonian(&inst.lattice, &inst.initial, &inst.basis).map_err(|x| e(&x))?;
            let hf = build_hamiltonian(&inst.lattice, &inst.final_, &inst.basis).map_err(|x| e(&x))?;
            let eig0 = diagonalize(&h0).map_err(|x| e(&x))?;
            let eigf = diagonalize(&hf).map_err(|x| e(&x))?;
            let w0 = thermal_weights(&eig0, inst.temperature, 0.0).map_err(|x| e(&x))?;
            let delta = potential_delta(&inst.initial, &inst.final_, inst.lattice.sites);
            let spec = spectral_moments(&eig0, &w0, &hf, 3).map_err(|x| e(&x))?;
            let cm = correlator_mean(&w0, &eig0, &delta, &inst.basis).map_err(|x| e(&x))?;
            let cv = correlator_variance(&w0, &eig0, &delta, &inst.basis).map_err(|x| e(&x))?;
            mean_err = mean_err.max(rel_err(spec.mean, cm));
            var_err = var_err.max(rel_err(spec.variance, cv));
            let disc = mu3_discrepancy(&eig0, &w0, &h0, &hf, &delta, &inst.basis).map_err(|x| e(&x))?;
            d3_err = d3_err.max(disc.identity_residual() / disc.delta3.abs().max(disc.identity.abs()).max(1.0));
            let k = InitialStateKernel::from_eigen(&h0, &inst.basis, &eig0, &w0).moments(&delta);
            kernel_err = kernel_err.max(rel_err(k.variance, spec.variance)).max(rel_err(k.mu3, spec.mu3));
            if inst.temperature > 0.0 {
                thermal += 1;
                let dist = tpm_distribution_with_floor(&eig0, &eigf, &w0, 1e-9, 0.0).map_err(|x| e(&x))?;
                let lz0 = log_partition(eig0.values(), inst.temperature);
                let lzf = log_partition(eigf.values(), inst.temperature);
                jz_err = jz_err.max(jarzynski_residual(&dist, inst.temperature, lz0, lzf));
            }
            Ok(())
        };
        if let Err(msg) = run() {
            failure.get_or_insert(format!("instance {seed}: {msg}"));
        }
    }
    let ok = failure.is_none();
    let tail = failure.map(|f| format!("; {f}")).unwrap_or_default();
    vec![
        CheckResult::new(
            "route agreement <W>, var W",
            ok && mean_err <= 1e-9 && var_err <= 1e-9,
            format!("{instances} instances, max rel err {mean_err:.1e} / {var_err:.1e}{tail}"),
        ),
        CheckResult::new("mu3 discrepancy identity", ok && d3_err <= 1e-8, format!("max rel residual {d3_err:.1e}")),
        CheckResult::new(
            "kernel vs spectral moments",
            ok && kernel_err <= 1e-8,
            format!("max rel err {kernel_err:.1e}"),
        ),
        CheckResult::new(
            "Jarzynski equality",
            ok && thermal > 0 && jz_err <= 1e-8,
            format!("{thermal} thermal instances, max residual {jz_err:.1e}"),
        ),
    ]
}

/// Central moments of every half-filling pair at `C = 50%` on the
/// constructed critical state, protocols A and B.
fn critical_check(sites: usize, strength: f64) -> CheckResult {
    let n = sites / 2;
    let basis = match SectorBasis::new(sites, n, n) {
        Ok(b) => b,
        Err(e) => return CheckResult::new("critical-state oracle", false, e.to_string()),
    };
    let specs = [
        ProtocolSpec::Concentration { strength, impurities: n, pairing: Pairing::Resample },
        ProtocolSpec::Strength { v0: strength / 2.0, vf: strength, impurities: n },
    ];
    let mut worst = 0.0f64;
    let mut mean_err = 0.0f64;
    let mut pairs_checked = 0;
    let occ = basis.occupations();
    let occupations: Vec<&[u8]> = occ.chunks(sites).collect();
    for spec in &specs {
        let Ok(pairs) = protocol_pairs(spec, sites) else {
            return CheckResult::new("critical-state oracle", false, "pair enumeration failed".into());
        };
        for p in pairs {
            let state = build_critical_state(&p.initial, &basis).expect("half filling");
            let probs = state.probabilities();
            let oracle = critical_moment_oracle(&p.initial, &p.delta);
            let mean: f64 = probs.iter().zip(&occupations).map(|(q, occ)| q * p.delta.on_occupations(occ)).sum();
            mean_err = mean_err.max((mean - oracle.mean).abs());
            for order in 2..=4 {
                let m = operator_central_moment(&probs, &basis, &p.delta, order).expect("sites match");
                worst = worst.max(m.abs());
            }
            pairs_checked += 1;
        }
    }
    CheckResult::new(
        "critical-state oracle",
        worst <= 1e-12 && mean_err <= 1e-12,
        format!("{pairs_checked} pairs on L={sites}, max |mu_k| = {worst:.1e}, mean err {mean_err:.1e}"),
    )
}

fn iterative_check() -> CheckResult {
    let lat = LatticeSpec::open(6, -5.0);
    let mk = |mode| {
        let opts = SolverOptions { mode, ..SolverOptions::default() };
        ProfileSolver::new(lat, SectorBasis::new(6, 3, 3).expect("sector"), opts).expect("solver")
    };
    let (dense, iter) = (mk(SolverMode::Dense), mk(SolverMode::Iterative));
    let init = ImpurityConfig::new(vec![0, 2, 3], -6.0, 6).expect("config");
    let fin = ImpurityConfig::new(vec![1, 2, 3, 5], -6.0, 6).expect("config");
    let delta = potential_delta(&init, &fin, 6);
    let temps = [0.0, 2.0, 30.0];
    let (a, b) = match (dense.kernels(&init.potential(6), &temps), iter.kernels(&init.potential(6), &temps)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return CheckResult::new("iterative vs dense solver", false, e.to_string()),
    };
    let mut worst = 0.0f64;
    for (ka, kb) in a.iter().zip(&b) {
        let (ma, mb) = (ka.moments(&delta), kb.moments(&delta));
        worst =
            worst.max(rel_err(ma.mean, mb.mean)).max(rel_err(ma.variance, mb.variance)).max(rel_err(ma.mu3, mb.mu3));
        worst = worst.max((ka.entanglement().site_average - kb.entanglement().site_average).abs());
    }
    CheckResult::new(
        "iterative vs dense solver",
        worst <= 1e-8,
        format!("L=6, T in {{0,2,30}}, max rel err {worst:.1e}"),
    )
}

fn determinism_check() -> CheckResult {
    let mut base = RunConfig::default();
    base.lattice.sites = 4;
    base.protocol.strengths = vec![-6.0];
    base.temperatures = vec![0.0, 2.0];
    if let Err(e) = prepare(&mut base) {
        return CheckResult::new("determinism", false, e.to_string());
    }
    let run = |workers: usize, cache: bool| -> Result<Vec<String>, String> {
        let mut cfg = base.clone();
        cfg.workers = Some(workers);
        cfg.cache.enabled = cache;
        let ens = build_ensemble(&cfg, false).map_err(|e| e.to_string())?;
        let rows = ens
            .sweep_concentration(-6.0, Pairing::Resample, &cfg.temperatures, &cfg.concentrations_a())
            .map_err(|e| e.to_string())?;
        Ok(rows.iter().map(|r| r.csv_line()).collect())
    };
    match (run(1, true), run(1, true), run(3, true), run(2, false)) {
        (Ok(a), Ok(b), Ok(c), Ok(d)) => {
            let same = a == b && a == c && a == d;
            CheckResult::new("determinism", same, format!("{} rows, 1/3 workers, cache on/off", a.len()))
        }
        _ => CheckResult::new("determinism", false, "sweep failed".into()),
    }
}

/// Runs every check. None of them depend on the user configuration, so the
/// suite is the same on every machine.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = vec![dimer_oracle()];
    out.extend(route_checks(50));
    out.push(critical_check(8, -10.0));
    out.push(iterative_check());
    out.push(determinism_check());
    out
}

/// Fixed-width pass/fail table.
pub fn render_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{mark}  {:width$}  {}\n", r.name, r.detail));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        assert!(dimer_oracle().passed);
        for r in route_checks(12) {
            assert!(r.passed, "{r:?}");
        }
        let c = critical_check(4, -10.0);
        assert!(c.passed, "{c:?}");
    }
}
