//! Experiment orchestration behind the command-line subcommands.
//!
//! Each `*_run` function takes a validated, resolved [`RunConfig`], performs
//! the computation through one [`Ensemble`] and returns plain records. The
//! matching `write_*` function renders them to CSV under the configured
//! output directory. Output is produced on the calling thread after the
//! parallel work has been reduced in a fixed order.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::SectorBasis;
use crate::config::RunConfig;
use crate::ensemble::{
    enumerate_configs, impurities_for_concentration, sample_pairs, Ensemble, ProtocolSpec, QuenchPair, SweepOptions,
    SweepRow, SWEEP_CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::hamiltonian::LatticeSpec;
use crate::io::{output_path, tag, write_csv};
use crate::observables::{EntanglementResult, SiteRdm};
use crate::solver::{CacheStats, KernelCache, ProfileSolver, SolverOptions};
use crate::spectra::{diagonalize_with_limit, thermal_weights_with_tol};
use crate::workstats::{tpm_distribution, WorkDistribution};

/// Validates and resolves a configuration in place.
pub fn prepare(config: &mut RunConfig) -> Result<()> {
    config.validate()?;
    config.resolve();
    Ok(())
}

pub fn lattice_of(config: &RunConfig) -> LatticeSpec {
    let l = &config.lattice;
    LatticeSpec::new(l.sites, l.hopping, l.interaction, l.boundary)
}

pub fn solver_options(config: &RunConfig) -> SolverOptions {
    SolverOptions {
        mode: config.solver.mode,
        auto_dense_limit: config.solver.auto_dense_limit,
        dense_limit: config.solver.dense_limit,
        degeneracy_tol: config.tolerances.degeneracy_tol,
        weight_cutoff: config.tolerances.weight_cutoff,
        ..SolverOptions::default()
    }
}

pub fn build_ensemble(config: &RunConfig, keep_records: bool) -> Result<Ensemble> {
    let lattice = lattice_of(config);
    let basis = SectorBasis::new(lattice.sites, config.n_up(), config.n_dn())?;
    let solver = ProfileSolver::new(lattice, basis, solver_options(config))?;
    let capacity = if config.cache.enabled {
        KernelCache::capacity_for_budget(config.cache.memory_budget_mb << 20, lattice.sites)
    } else {
        0
    };
    let options = SweepOptions { sampling: config.sampling, keep_records };
    Ok(Ensemble::new(solver, KernelCache::new(capacity), config.effective_workers(), options)?)
}

/// Rows of a sweep together with run metadata for the sidecar file.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub cache: CacheStats,
}

/// Largest discarded initial-state weight a sweep accepts.
pub const TRUNCATION_BUDGET: f64 = 1e-6;

fn check_rows(rows: &[SweepRow], cutoff: f64) -> Result<()> {
    for r in rows {
        let s = &r.stats;
        let values = [s.mean_w, s.var_w, s.mu3_w, s.delta3, s.lin_entropy];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "non-finite statistics at C = {}, T = {}",
                r.c_initial, r.temperature
            )));
        }
        if s.var_w < -1e-9 * (1.0 + s.mean_w * s.mean_w) {
            return Err(Error::Invariant(format!("negative variance {} at C = {}", s.var_w, r.c_initial)));
        }
        if !(-1e-12..=0.75 + 1e-12).contains(&s.lin_entropy) {
            return Err(Error::Invariant(format!("linear entropy {} outside [0, 3/4]", s.lin_entropy)));
        }
        if s.truncation_mass > TRUNCATION_BUDGET.max(cutoff) {
            return Err(Error::Invariant(format!("truncation mass {} exceeds budget", s.truncation_mass)));
        }
    }
    Ok(())
}

/// Protocol A over every configured strength; rows ordered by `(V, C, T)`.
pub fn sweep_concentration_run(config: &RunConfig) -> Result<SweepOutput> {
    let ens = build_ensemble(config, false)?;
    let cs = config.concentrations_a();
    let mut rows = Vec::new();
    for &v in &config.protocol.strengths {
        rows.extend(ens.sweep_concentration(v, config.protocol.pairing, &config.temperatures, &cs)?);
    }
    check_rows(&rows, config.tolerances.weight_cutoff)?;
    Ok(SweepOutput { rows, cache: ens.cache().stats() })
}

/// Protocol B; rows ordered by `(V₀, C, T)`.
pub fn sweep_potential_run(config: &RunConfig) -> Result<SweepOutput> {
    let ens = build_ensemble(config, false)?;
    let rows =
        ens.sweep_potential(&config.protocol.v0_values, config.vf(), &config.temperatures, &config.concentrations_b())?;
    check_rows(&rows, config.tolerances.weight_cutoff)?;
    Ok(SweepOutput { rows, cache: ens.cache().stats() })
}

#[derive(Serialize)]
struct RowMeta<'a> {
    protocol: &'a str,
    v0: f64,
    vf: f64,
    temperature: f64,
    c_initial: f64,
    n_pairs: usize,
    exhaustive: bool,
    truncation_mass: f64,
    mu3_correlator: f64,
    removed_counts: &'a BTreeMap<usize, usize>,
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    version: &'a str,
    command: &'a str,
    cache: CacheStats,
    rows: Vec<RowMeta<'a>>,
}

/// Writes `<name>.csv` and a `<name>.meta.json` sidecar with per-row sampling,
/// truncation and removed-site counts. Returns the CSV path.
pub fn write_sweep(config: &RunConfig, command: &str, name: &str, out: &SweepOutput) -> Result<PathBuf> {
    let path = output_path(config, &format!("{name}.csv"));
    write_csv(&path, command, config, |w| {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for r in &out.rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    })?;
    let meta = SweepMeta {
        version: crate::io::VERSION,
        command,
        cache: out.cache,
        rows: out
            .rows
            .iter()
            .map(|r| RowMeta {
                protocol: r.protocol,
                v0: r.v0,
                vf: r.vf,
                temperature: r.temperature,
                c_initial: r.c_initial,
                n_pairs: r.stats.n_pairs,
                exhaustive: r.exhaustive,
                truncation_mass: r.stats.truncation_mass,
                mu3_correlator: r.stats.mu3_correlator,
                removed_counts: &r.stats.removed_counts,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Invariant(e.to_string()))?;
    std::fs::write(output_path(config, &format!("{name}.meta.json")), json + "\n")?;
    Ok(path)
}

/// One exported work distribution.
#[derive(Debug, Clone)]
pub struct DistributionRecord {
    pub c_initial: f64,
    pub temperature: f64,
    pub pair: QuenchPair,
    pub distribution: WorkDistribution,
}

/// Full TPM distributions of `pair` at every temperature, from dense
/// eigensystems of the initial and final Hamiltonians.
pub fn pair_distributions(
    solver: &ProfileSolver,
    pair: &QuenchPair,
    temperatures: &[f64],
    config: &RunConfig,
) -> Result<Vec<WorkDistribution>> {
    let sites = solver.basis().sites();
    let limit = config.solver.dense_limit;
    let h0 = solver.hamiltonian(&pair.initial.potential(sites))?;
    let hf = solver.hamiltonian(&pair.final_.potential(sites))?;
    let eig0 = diagonalize_with_limit(&h0, limit)?;
    let eigf = diagonalize_with_limit(&hf, limit)?;
    let tol = &config.tolerances;
    temperatures
        .iter()
        .map(|&t| {
            let w0 = thermal_weights_with_tol(&eig0, t, tol.weight_cutoff, tol.degeneracy_tol)?;
            let d = tpm_distribution(&eig0, &eigf, &w0, tol.merge_tol)?;
            let total = d.total_probability();
            if !(total > 1.0 - 1e-8 && total <= 1.0 + 1e-12) {
                return Err(Error::Invariant(format!("distribution normalisation {total}")));
            }
            Ok(d)
        })
        .collect()
}

/// One protocol-A pair per concentration, chosen by `pair_seed`, at every
/// temperature. The same pair is used for all temperatures.
pub fn distribution_run(config: &RunConfig) -> Result<Vec<DistributionRecord>> {
    let ens = build_ensemble(config, false)?;
    let sites = config.lattice.sites;
    let strength = config.protocol.distribution_strength;
    let mut picks = Vec::new();
    for (i, &c) in config.concentrations_a().iter().enumerate() {
        let impurities = impurities_for_concentration(c, sites)?;
        let spec = ProtocolSpec::Concentration { strength, impurities, pairing: config.protocol.pairing };
        spec.validate(sites)?;
        let seed = config.pair_seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let pair = sample_pairs(&spec, sites, 1, seed)?.pairs.swap_remove(0);
        picks.push((c, pair));
    }
    let temps = &config.temperatures;
    let dists = ens.install(|| {
        picks
            .par_iter()
            .map(|(_, pair)| pair_distributions(ens.solver(), pair, temps, config))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(picks
        .into_iter()
        .zip(dists)
        .flat_map(|((c, pair), ds)| {
            temps.iter().zip(ds).map(move |(&t, d)| DistributionRecord {
                c_initial: c,
                temperature: t,
                pair: pair.clone(),
                distribution: d,
            })
        })
        .collect())
}

/// Writes one `w,p` file per record plus `distribution_pairs.csv` naming the
/// chosen configurations.
pub fn write_distributions(config: &RunConfig, records: &[DistributionRecord]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for r in records {
        let path = output_path(config, &format!("distribution_C{}_T{}.csv", tag(r.c_initial), tag(r.temperature)));
        write_csv(&path, "distribution", config, |w| r.distribution.write_csv(&mut *w).map_err(std::io::Error::other))?;
        paths.push(path);
    }
    let index = output_path(config, "distribution_pairs.csv");
    write_csv(&index, "distribution", config, |w| {
        writeln!(w, "C_initial,T,initial_sites,final_sites,support,truncation_mass")?;
        for r in records {
            let fmt = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.c_initial,
                r.temperature,
                fmt(r.pair.initial.sites()),
                fmt(r.pair.final_.sites()),
                r.distribution.len(),
                r.distribution.truncation_mass
            )?;
        }
        Ok(())
    })?;
    paths.push(index);
    Ok(paths)
}

/// Configuration-averaged single-site entanglement at one grid point.
#[derive(Debug, Clone)]
pub struct EntanglementRow {
    pub strength: f64,
    pub temperature: f64,
    pub concentration: f64,
    pub n_configs: usize,
    pub lin_entropy_avg: f64,
    /// Site RDM probabilities and linear entropies averaged over configurations.
    pub sites: EntanglementResult,
}

fn average_sites(results: &[EntanglementResult]) -> EntanglementResult {
    let n = results.len().max(1) as f64;
    let l = results.first().map_or(0, |r| r.rdms.len());
    let mut rdms = vec![SiteRdm { p_empty: 0.0, p_up: 0.0, p_dn: 0.0, p_double: 0.0 }; l];
    let mut per_site = vec![0.0; l];
    for r in results {
        for (acc, x) in rdms.iter_mut().zip(&r.rdms) {
            acc.p_empty += x.p_empty / n;
            acc.p_up += x.p_up / n;
            acc.p_dn += x.p_dn / n;
            acc.p_double += x.p_double / n;
        }
        for (acc, x) in per_site.iter_mut().zip(&r.per_site) {
            *acc += x / n;
        }
    }
    let site_average = if l == 0 { 0.0 } else { per_site.iter().sum::<f64>() / l as f64 };
    EntanglementResult { rdms, per_site, site_average }
}

/// Every configuration of every entanglement concentration and strength.
/// Rows ordered by `(V, C, T)`.
pub fn entanglement_run(config: &RunConfig) -> Result<Vec<EntanglementRow>> {
    let ens = build_ensemble(config, false)?;
    let sites = config.lattice.sites;
    let temps = &config.temperatures;
    let mut rows = Vec::new();
    for &v in &config.protocol.entanglement_strengths {
        for &c in &config.concentrations_entanglement() {
            let n = impurities_for_concentration(c, sites)?;
            let configs = enumerate_configs(sites, n, v)?;
            let kernels = ens.config_kernels(&configs, temps)?;
            for (ti, &t) in temps.iter().enumerate() {
                let results: Vec<EntanglementResult> = kernels.iter().map(|k| k[ti].entanglement()).collect();
                let sites_avg = average_sites(&results);
                rows.push(EntanglementRow {
                    strength: v,
                    temperature: t,
                    concentration: c,
                    n_configs: configs.len(),
                    lin_entropy_avg: crate::observables::ensemble_entanglement(&results),
                    sites: sites_avg,
                });
            }
        }
    }
    Ok(rows)
}

pub const ENTANGLEMENT_CSV_HEADER: &str = "V,T,C,N_configs,lin_entropy_avg";

/// Writes `entanglement.csv` and, if requested, one averaged site table per row.
pub fn write_entanglement(config: &RunConfig, rows: &[EntanglementRow], site_tables: bool) -> Result<Vec<PathBuf>> {
    let path = output_path(config, "entanglement.csv");
    write_csv(&path, "entanglement", config, |w| {
        writeln!(w, "{ENTANGLEMENT_CSV_HEADER}")?;
        for r in rows {
            writeln!(w, "{},{},{},{},{}", r.strength, r.temperature, r.concentration, r.n_configs, r.lin_entropy_avg)?;
        }
        Ok(())
    })?;
    let mut paths = vec![path];
    if site_tables {
        for r in rows {
            let name = format!(
                "entanglement_sites_V{}_C{}_T{}.csv",
                tag(r.strength),
                tag(r.concentration),
                tag(r.temperature)
            );
            let p = output_path(config, &name);
            write_csv(&p, "entanglement", config, |w| r.sites.write_csv(&mut *w).map_err(std::io::Error::other))?;
            paths.push(p);
        }
    }
    Ok(paths)
}
