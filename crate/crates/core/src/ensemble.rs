//! Impurity configurations, quench pairs for the two protocols, and
//! configuration-averaged statistics over them.
//!
//! Protocol A raises the concentration by one impurity at a fixed strength;
//! protocol B keeps the impurity count and deepens the potential from `V₀` to
//! `V_f`. Per-pair work moments only need the initial state, so each sweep
//! first solves every distinct initial profile once (in parallel, through the
//! kernel cache) and then reduces the pairs in their fixed lexicographic order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::binomial;
use crate::hamiltonian::{potential_delta, ImpurityConfig, PotentialDelta};
use crate::kernel::{InitialStateKernel, KernelMoments};
use crate::solver::{KernelCache, ProfileSolver};

/// Upper bound on enumerated configurations or pairs.
pub const DEFAULT_PAIR_LIMIT: usize = 5_000_000;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("concentration {concentration}% on {sites} sites is not an integer impurity count")]
    NonIntegerImpurities { concentration: f64, sites: usize },
    #[error("{what} count {count} exceeds the limit {limit}")]
    Capacity { what: &'static str, count: u128, limit: usize },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("initial-state solve failed: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Final configuration drawn independently among all `N_i + 1` placements.
    #[default]
    Resample,
    /// Final configuration is the initial one plus one site.
    Superset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolSpec {
    /// Protocol A: `N_i → N_i + 1` impurities of strength `strength`.
    Concentration { strength: f64, impurities: usize, pairing: Pairing },
    /// Protocol B: `N_i` impurities, strength `v0 → vf`.
    Strength { v0: f64, vf: f64, impurities: usize },
}

impl ProtocolSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Concentration { .. } => "A",
            Self::Strength { .. } => "B",
        }
    }

    pub fn initial_impurities(&self) -> usize {
        match *self {
            Self::Concentration { impurities, .. } | Self::Strength { impurities, .. } => impurities,
        }
    }

    pub fn final_impurities(&self) -> usize {
        match *self {
            Self::Concentration { impurities, .. } => impurities + 1,
            Self::Strength { impurities, .. } => impurities,
        }
    }

    /// `(V₀, V_f)`
    pub fn strengths(&self) -> (f64, f64) {
        match *self {
            Self::Concentration { strength, .. } => (strength, strength),
            Self::Strength { v0, vf, .. } => (v0, vf),
        }
    }

    pub fn validate(&self, sites: usize) -> Result<(), EnsembleError> {
        if self.final_impurities() > sites {
            return Err(EnsembleError::InvalidProtocol(format!(
                "{} final impurities do not fit on {sites} sites",
                self.final_impurities()
            )));
        }
        if let Self::Strength { v0, vf, .. } = *self {
            if !(vf.abs() > v0.abs()) {
                return Err(EnsembleError::InvalidProtocol(format!(
                    "|V_f| = {} must exceed |V_0| = {}",
                    vf.abs(),
                    v0.abs()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchPair {
    pub initial: ImpurityConfig,
    pub final_: ImpurityConfig,
    pub delta: PotentialDelta,
}

impl QuenchPair {
    pub fn new(initial: ImpurityConfig, final_: ImpurityConfig, sites: usize) -> Self {
        let delta = potential_delta(&initial, &final_, sites);
        Self { initial, final_, delta }
    }

    /// Number of initial impurity sites absent from the final configuration.
    pub fn removed_sites(&self) -> usize {
        self.initial.sites().iter().filter(|&&s| !self.final_.contains(s)).count()
    }
}

/// All `C(L, N_i)` placements in lexicographic order of their site lists.
pub fn enumerate_configs(sites: usize, impurities: usize, strength: f64) -> Result<Vec<ImpurityConfig>, EnsembleError> {
    enumerate_configs_with_limit(sites, impurities, strength, DEFAULT_PAIR_LIMIT)
}

pub fn enumerate_configs_with_limit(
    sites: usize,
    impurities: usize,
    strength: f64,
    limit: usize,
) -> Result<Vec<ImpurityConfig>, EnsembleError> {
    if impurities > sites {
        return Err(EnsembleError::InvalidProtocol(format!("{impurities} impurities on {sites} sites")));
    }
    let count = binomial(sites, impurities);
    if count > limit as u128 {
        return Err(EnsembleError::Capacity { what: "configuration", count, limit });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..impurities).collect();
    loop {
        out.push(ImpurityConfig::new(idx.clone(), strength, sites).expect("valid combination"));
        // advance to the next combination in lexicographic order
        let Some(i) = (0..impurities).rev().find(|&i| idx[i] < sites - impurities + i) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..impurities {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(out)
}

fn pair_count(spec: &ProtocolSpec, sites: usize) -> u128 {
    let ni = spec.initial_impurities();
    match *spec {
        ProtocolSpec::Concentration { pairing: Pairing::Superset, .. } => {
            binomial(sites, ni).saturating_mul((sites - ni) as u128)
        }
        _ => binomial(sites, ni).saturating_mul(binomial(sites, spec.final_impurities())),
    }
}

/// Every pair of the protocol, ordered by initial then final configuration.
pub fn protocol_pairs(spec: &ProtocolSpec, sites: usize) -> Result<Vec<QuenchPair>, EnsembleError> {
    protocol_pairs_with_limit(spec, sites, DEFAULT_PAIR_LIMIT)
}

pub fn protocol_pairs_with_limit(
    spec: &ProtocolSpec,
    sites: usize,
    limit: usize,
) -> Result<Vec<QuenchPair>, EnsembleError> {
    if spec.final_impurities() > sites {
        return Err(EnsembleError::InvalidProtocol(format!(
            "{} final impurities do not fit on {sites} sites",
            spec.final_impurities()
        )));
    }
    let count = pair_count(spec, sites);
    if count > limit as u128 {
        return Err(EnsembleError::Capacity { what: "pair", count, limit });
    }
    let (v0, vf) = spec.strengths();
    let initials = enumerate_configs_with_limit(sites, spec.initial_impurities(), v0, limit)?;
    let mut pairs = Vec::with_capacity(count as usize);
    match *spec {
        ProtocolSpec::Concentration { pairing: Pairing::Superset, .. } => {
            for init in &initials {
                for s in (0..sites).filter(|&s| !init.contains(s)) {
                    let mut fs = init.sites().to_vec();
                    fs.push(s);
                    let fin = ImpurityConfig::new(fs, vf, sites).expect("valid superset");
                    pairs.push(QuenchPair::new(init.clone(), fin, sites));
                }
            }
        }
        _ => {
            let finals = enumerate_configs_with_limit(sites, spec.final_impurities(), vf, limit)?;
            for init in &initials {
                for fin in &finals {
                    pairs.push(QuenchPair::new(init.clone(), fin.clone(), sites));
                }
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPairs {
    pub pairs: Vec<QuenchPair>,
    /// The request covered the whole pair space, so every pair is listed once.
    pub exhaustive: bool,
}

fn random_config(rng: &mut ChaCha8Rng, sites: usize, n: usize, strength: f64) -> ImpurityConfig {
    ImpurityConfig::new(sample(rng, sites, n).into_vec(), strength, sites).expect("distinct sites")
}

/// `count` independent uniform draws from the pair space of `spec`.
pub fn sample_pairs(spec: &ProtocolSpec, sites: usize, count: usize, seed: u64) -> Result<SampledPairs, EnsembleError> {
    if count == 0 {
        return Err(EnsembleError::InvalidProtocol("sample count must be at least 1".into()));
    }
    if spec.final_impurities() > sites {
        return Err(EnsembleError::InvalidProtocol(format!(
            "{} final impurities do not fit on {sites} sites",
            spec.final_impurities()
        )));
    }
    if pair_count(spec, sites) <= count as u128 {
        return Ok(SampledPairs { pairs: protocol_pairs(spec, sites)?, exhaustive: true });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v0, vf) = spec.strengths();
    let ni = spec.initial_impurities();
    let pairs = (0..count)
        .map(|_| {
            let init = random_config(&mut rng, sites, ni, v0);
            let fin = match *spec {
                ProtocolSpec::Concentration { pairing: Pairing::Superset, .. } => {
                    let free: Vec<usize> = (0..sites).filter(|&s| !init.contains(s)).collect();
                    let mut fs = init.sites().to_vec();
                    fs.push(free[rng.random_range(0..free.len())]);
                    ImpurityConfig::new(fs, vf, sites).expect("valid superset")
                }
                _ => random_config(&mut rng, sites, spec.final_impurities(), vf),
            };
            QuenchPair::new(init, fin, sites)
        })
        .collect();
    Ok(SampledPairs { pairs, exhaustive: false })
}

/// Impurity count for a concentration given in percent.
pub fn impurities_for_concentration(concentration: f64, sites: usize) -> Result<usize, EnsembleError> {
    let exact = concentration * sites as f64 / 100.0;
    let n = exact.round();
    if !(exact >= 0.0) || (exact - n).abs() > 1e-9 || n > sites as f64 {
        return Err(EnsembleError::NonIntegerImpurities { concentration, sites });
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub initial: Vec<usize>,
    pub final_: Vec<usize>,
    pub moments: KernelMoments,
    pub lin_entropy: f64,
}

/// Arithmetic means over the pairs of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_pairs: usize,
    pub mean_w: f64,
    pub var_w: f64,
    pub mu3_w: f64,
    pub mu3_correlator: f64,
    pub delta3: f64,
    pub lin_entropy: f64,
    /// Largest initial-state truncation mass among the pairs.
    pub truncation_mass: f64,
    /// `removed_sites → number of pairs`
    pub removed_counts: BTreeMap<usize, usize>,
    pub records: Option<Vec<PairRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Sampling {
    #[default]
    Exhaustive,
    Sampled {
        count: usize,
        seed: u64,
    },
}

/// Settings shared by every sweep run through one [`Ensemble`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub sampling: Sampling,
    pub keep_records: bool,
}

/// Solver, cache and worker pool for ensemble sweeps.
pub struct Ensemble {
    solver: ProfileSolver,
    cache: KernelCache,
    pool: rayon::ThreadPool,
    options: SweepOptions,
}

/// One output row: a grid point at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub protocol: &'static str,
    pub sites: usize,
    pub n_up: usize,
    pub n_dn: usize,
    pub interaction: f64,
    pub v0: f64,
    pub vf: f64,
    pub temperature: f64,
    pub c_initial: f64,
    pub exhaustive: bool,
    pub stats: EnsembleStats,
}

pub const SWEEP_CSV_HEADER: &str =
    "protocol,L,n_up,n_dn,U,V0,Vf,T,C_initial,N_pairs,mean_W,var_W,mu3_W,delta3,lin_entropy_avg";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let s = &self.stats;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.protocol,
            self.sites,
            self.n_up,
            self.n_dn,
            self.interaction,
            self.v0,
            self.vf,
            self.temperature,
            self.c_initial,
            s.n_pairs,
            s.mean_w,
            s.var_w,
            s.mu3_w,
            s.delta3,
            s.lin_entropy
        )
    }
}

impl Ensemble {
    /// `workers = 0` uses the available parallelism.
    pub fn new(
        solver: ProfileSolver,
        cache: KernelCache,
        workers: usize,
        options: SweepOptions,
    ) -> Result<Self, EnsembleError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EnsembleError::Solver(e.to_string()))?;
        Ok(Self { solver, cache, pool, options })
    }

    pub fn solver(&self) -> &ProfileSolver {
        &self.solver
    }

    pub fn cache(&self) -> &KernelCache {
        &self.cache
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn sites(&self) -> usize {
        self.solver.basis().sites()
    }

    /// Runs `f` inside the ensemble worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Initial-state kernels for each configuration, in input order.
    pub fn config_kernels(
        &self,
        configs: &[ImpurityConfig],
        temperatures: &[f64],
    ) -> Result<Vec<Arc<Vec<InitialStateKernel>>>, EnsembleError> {
        let sites = self.sites();
        self.pool
            .install(|| {
                configs
                    .par_iter()
                    .map(|c| self.cache.get_or_compute(&self.solver, &c.potential(sites), temperatures))
                    .collect::<Result<Vec<_>, String>>()
            })
            .map_err(EnsembleError::Solver)
    }

    fn pairs_for(&self, spec: &ProtocolSpec, grid_index: u64) -> Result<SampledPairs, EnsembleError> {
        match self.options.sampling {
            Sampling::Exhaustive => Ok(SampledPairs { pairs: protocol_pairs(spec, self.sites())?, exhaustive: true }),
            Sampling::Sampled { count, seed } => {
                let mixed = seed ^ grid_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
                sample_pairs(spec, self.sites(), count, mixed)
            }
        }
    }

    /// Statistics of `pairs` at every temperature, in temperature order.
    pub fn pair_statistics(
        &self,
        pairs: &[QuenchPair],
        temperatures: &[f64],
    ) -> Result<Vec<EnsembleStats>, EnsembleError> {
        let sites = self.sites();
        let mut profiles: Vec<u32> = Vec::new();
        let mut profile_of: BTreeMap<(Vec<usize>, u64), usize> = BTreeMap::new();
        let mut pair_profile = Vec::with_capacity(pairs.len());
        let caching = self.cache.capacity() > 0;
        for (i, p) in pairs.iter().enumerate() {
            // without caching every pair gets its own solve
            let key = (p.initial.sites().to_vec(), if caching { p.initial.strength().to_bits() } else { i as u64 });
            let next = profile_of.len();
            let idx = *profile_of.entry(key).or_insert_with(|| {
                profiles.push(i as u32);
                next
            });
            pair_profile.push(idx);
        }

        let kernels: Vec<_> = self
            .pool
            .install(|| {
                profiles
                    .par_iter()
                    .map(|&i| {
                        let pot = pairs[i as usize].initial.potential(sites);
                        self.cache.get_or_compute(&self.solver, &pot, temperatures)
                    })
                    .collect::<Result<Vec<_>, String>>()
            })
            .map_err(EnsembleError::Solver)?;

        let mut out = Vec::with_capacity(temperatures.len());
        for t in 0..temperatures.len() {
            let n = pairs.len();
            let mut records = self.options.keep_records.then(|| Vec::with_capacity(n));
            let mut acc = [0.0f64; 6];
            let mut trunc = 0.0f64;
            let mut removed = BTreeMap::new();
            for (p, &pi) in pairs.iter().zip(&pair_profile) {
                let k = &kernels[pi][t];
                let m = k.moments(&p.delta);
                let ent = k.entanglement().site_average;
                for (a, v) in acc.iter_mut().zip([m.mean, m.variance, m.mu3, m.mu3_correlator, m.delta3, ent]) {
                    *a += v;
                }
                trunc = trunc.max(k.truncation_mass);
                *removed.entry(p.removed_sites()).or_insert(0) += 1;
                if let Some(r) = records.as_mut() {
                    r.push(PairRecord {
                        initial: p.initial.sites().to_vec(),
                        final_: p.final_.sites().to_vec(),
                        moments: m,
                        lin_entropy: ent,
                    });
                }
            }
            let nf = n.max(1) as f64;
            out.push(EnsembleStats {
                n_pairs: n,
                mean_w: acc[0] / nf,
                var_w: acc[1] / nf,
                mu3_w: acc[2] / nf,
                mu3_correlator: acc[3] / nf,
                delta3: acc[4] / nf,
                lin_entropy: acc[5] / nf,
                truncation_mass: trunc,
                removed_counts: removed,
                records,
            });
        }
        Ok(out)
    }

    fn rows_for(
        &self,
        spec: &ProtocolSpec,
        concentration: f64,
        grid_index: u64,
        temperatures: &[f64],
    ) -> Result<Vec<SweepRow>, EnsembleError> {
        let sampled = self.pairs_for(spec, grid_index)?;
        let stats = self.pair_statistics(&sampled.pairs, temperatures)?;
        let (v0, vf) = spec.strengths();
        let b = self.solver.basis();
        Ok(temperatures
            .iter()
            .zip(stats)
            .map(|(&t, stats)| SweepRow {
                protocol: spec.label(),
                sites: b.sites(),
                n_up: b.n_up(),
                n_dn: b.n_dn(),
                interaction: self.solver.lattice().interaction,
                v0,
                vf,
                temperature: t,
                c_initial: concentration,
                exhaustive: sampled.exhaustive,
                stats,
            })
            .collect())
    }

    /// Protocol A over initial concentrations; rows ordered by `(C, T)`.
    pub fn sweep_concentration(
        &self,
        strength: f64,
        pairing: Pairing,
        temperatures: &[f64],
        concentrations: &[f64],
    ) -> Result<Vec<SweepRow>, EnsembleError> {
        let sites = self.sites();
        let specs = concentrations
            .iter()
            .map(|&c| {
                let impurities = impurities_for_concentration(c, sites)?;
                let spec = ProtocolSpec::Concentration { strength, impurities, pairing };
                spec.validate(sites)?;
                Ok((c, spec))
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        let mut rows = Vec::new();
        for (c, spec) in specs {
            rows.extend(self.rows_for(&spec, c, spec.initial_impurities() as u64, temperatures)?);
        }
        Ok(rows)
    }

    /// Protocol B over `V₀` and concentrations; rows ordered by `(V₀, C, T)`.
    pub fn sweep_potential(
        &self,
        v0_values: &[f64],
        vf: f64,
        temperatures: &[f64],
        concentrations: &[f64],
    ) -> Result<Vec<SweepRow>, EnsembleError> {
        let sites = self.sites();
        let mut specs = Vec::new();
        for &v0 in v0_values {
            for &c in concentrations {
                let impurities = impurities_for_concentration(c, sites)?;
                let spec = ProtocolSpec::Strength { v0, vf, impurities };
                spec.validate(sites)?;
                specs.push((c, spec));
            }
        }
        let mut rows = Vec::new();
        for (c, spec) in specs {
            rows.extend(self.rows_for(&spec, c, 1000 + spec.initial_impurities() as u64, temperatures)?);
        }
        Ok(rows)
    }
}
