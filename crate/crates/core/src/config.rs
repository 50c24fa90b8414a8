//! Run configuration: JSON in, fully resolved and validated before any work.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{binomial, DEFAULT_CAPACITY, MAX_SITES};
use crate::ensemble::{impurities_for_concentration, Pairing, Sampling};
use crate::hamiltonian::Boundary;
use crate::solver::SolverMode;
use crate::spectra::{DEFAULT_DEGENERACY_TOL, DEFAULT_DENSE_LIMIT, DEFAULT_WEIGHT_CUTOFF};
use crate::workstats::DEFAULT_MERGE_TOL;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub sites: usize,
    pub hopping: f64,
    pub interaction: f64,
    pub boundary: Boundary,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { sites: 8, hopping: 1.0, interaction: -5.0, boundary: Boundary::Open }
    }
}

/// Particle numbers; unset counts default to half filling `L/2` each.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectorSection {
    pub n_up: Option<usize>,
    pub n_dn: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Impurity strengths `V` for protocol A and the entanglement scan.
    pub strengths: Vec<f64>,
    pub pairing: Pairing,
    /// Initial strengths `V₀` for protocol B.
    pub v0_values: Vec<f64>,
    /// Final strength for protocol B; defaults to `2U`.
    pub vf: Option<f64>,
    /// Strengths scanned by the `entanglement` command.
    pub entanglement_strengths: Vec<f64>,
    /// Protocol-A strength used by the `distribution` command.
    pub distribution_strength: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            strengths: vec![-1.0, -3.0, -5.0, -8.0, -10.0],
            pairing: Pairing::Resample,
            v0_values: vec![-0.5, -1.0, -3.0, -5.0, -7.0],
            vf: None,
            entanglement_strengths: vec![-5.0, -10.0, -20.0],
            distribution_strength: -5.0,
        }
    }
}

/// Concentration grids in percent. Unset grids default to every integer
/// impurity count the protocol allows on the chain: `N_i = 0..=L−2` for A
/// (the final state never covers every site), `1..=L−1` for B and `0..=L−1`
/// for the entanglement scan.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub concentration_a: Option<Vec<f64>>,
    pub concentration_b: Option<Vec<f64>>,
    pub concentration_entanglement: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub merge_tol: f64,
    pub weight_cutoff: f64,
    pub degeneracy_tol: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            merge_tol: DEFAULT_MERGE_TOL,
            weight_cutoff: DEFAULT_WEIGHT_CUTOFF,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mode: SolverMode,
    /// `auto` uses the dense route up to this sector dimension.
    pub auto_dense_limit: usize,
    /// Hard limit for any dense decomposition.
    pub dense_limit: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { mode: SolverMode::Auto, auto_dense_limit: 1500, dense_limit: DEFAULT_DENSE_LIMIT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub enabled: bool,
    pub memory_budget_mb: usize,
}

impl Default for CacheSection {
    fn default() -> Self {
        Self { enabled: true, memory_budget_mb: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub sector: SectorSection,
    pub protocol: ProtocolSection,
    pub temperatures: Vec<f64>,
    pub grids: GridSection,
    pub sampling: Sampling,
    pub tolerances: ToleranceSection,
    pub solver: SolverSection,
    pub cache: CacheSection,
    pub output_dir: PathBuf,
    /// `0` or unset means all available cores.
    pub workers: Option<usize>,
    /// Selects the pair shown by the `distribution` command.
    pub pair_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeSection::default(),
            sector: SectorSection::default(),
            protocol: ProtocolSection::default(),
            temperatures: vec![0.0, 2.0, 30.0],
            grids: GridSection::default(),
            sampling: Sampling::Exhaustive,
            tolerances: ToleranceSection::default(),
            solver: SolverSection::default(),
            cache: CacheSection::default(),
            output_dir: PathBuf::from("out"),
            workers: None,
            pair_seed: 1,
        }
    }
}

fn default_grid(sites: usize, range: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    range.map(|n| 100.0 * n as f64 / sites as f64).collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Fills every defaulted field that depends on other fields.
    pub fn resolve(&mut self) {
        let l = self.lattice.sites;
        self.sector.n_up.get_or_insert(l / 2);
        self.sector.n_dn.get_or_insert(l / 2);
        self.protocol.vf.get_or_insert(2.0 * self.lattice.interaction);
        if l >= 1 {
            self.grids.concentration_a.get_or_insert_with(|| default_grid(l, 0..=l.saturating_sub(2)));
            self.grids.concentration_b.get_or_insert_with(|| default_grid(l, 1..=l - 1));
            self.grids.concentration_entanglement.get_or_insert_with(|| default_grid(l, 0..=l - 1));
        }
    }

    pub fn n_up(&self) -> usize {
        self.sector.n_up.unwrap_or(self.lattice.sites / 2)
    }

    pub fn n_dn(&self) -> usize {
        self.sector.n_dn.unwrap_or(self.lattice.sites / 2)
    }

    pub fn vf(&self) -> f64 {
        self.protocol.vf.unwrap_or(2.0 * self.lattice.interaction)
    }

    pub fn concentrations_a(&self) -> Vec<f64> {
        let l = self.lattice.sites;
        self.grids.concentration_a.clone().unwrap_or_else(|| default_grid(l, 0..=l.saturating_sub(2)))
    }

    pub fn concentrations_b(&self) -> Vec<f64> {
        let l = self.lattice.sites;
        self.grids.concentration_b.clone().unwrap_or_else(|| default_grid(l, 1..=l.saturating_sub(1)))
    }

    pub fn concentrations_entanglement(&self) -> Vec<f64> {
        let l = self.lattice.sites;
        self.grids.concentration_entanglement.clone().unwrap_or_else(|| default_grid(l, 0..=l.saturating_sub(1)))
    }

    /// Worker count after the `WORKERS` environment override.
    pub fn effective_workers(&self) -> usize {
        if let Some(n) = std::env::var("WORKERS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            return n;
        }
        self.workers.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let lat = &self.lattice;
        let l = lat.sites;
        if l == 0 || l > MAX_SITES {
            return invalid(format!("lattice.sites = {l} outside 1..={MAX_SITES}"));
        }
        if !(lat.hopping > 0.0) || !lat.hopping.is_finite() {
            return invalid(format!("lattice.hopping = {} must be positive", lat.hopping));
        }
        if !lat.interaction.is_finite() {
            return invalid("lattice.interaction must be finite");
        }
        let (nu, nd) = (self.n_up(), self.n_dn());
        if nu > l || nd > l {
            return invalid(format!("sector ({nu}, {nd}) does not fit on {l} sites"));
        }
        let dim = binomial(l, nu) * binomial(l, nd);
        if dim > DEFAULT_CAPACITY as u128 {
            return invalid(format!("sector dimension {dim} exceeds {DEFAULT_CAPACITY}"));
        }
        if self.temperatures.is_empty() {
            return invalid("temperatures must not be empty");
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return invalid(format!("temperature {t} must be finite and non-negative"));
        }
        let p = &self.protocol;
        let strengths = p.strengths.iter().chain(&p.v0_values).chain(&p.entanglement_strengths);
        for v in strengths.chain(std::iter::once(&p.distribution_strength)) {
            if !v.is_finite() {
                return invalid(format!("impurity strength {v} must be finite"));
            }
        }
        let vf = self.vf();
        if !vf.is_finite() {
            return invalid("protocol.vf must be finite");
        }
        if let Some(v0) = self.protocol.v0_values.iter().find(|v0| !(vf.abs() > v0.abs())) {
            return invalid(format!("|V0| = {} must be smaller than |Vf| = {}", v0.abs(), vf.abs()));
        }
        for (name, grid, max_n) in [
            ("grids.concentration_a", self.concentrations_a(), l.saturating_sub(1)),
            ("grids.concentration_b", self.concentrations_b(), l),
            ("grids.concentration_entanglement", self.concentrations_entanglement(), l),
        ] {
            for c in grid {
                let n = impurities_for_concentration(c, l).map_err(|_| {
                    ConfigError::Invalid(format!("{name}: C = {c}% gives a non-integer impurity count on {l} sites"))
                })?;
                if n > max_n {
                    return invalid(format!("{name}: C = {c}% leaves no room for the protocol on {l} sites"));
                }
            }
        }
        let tol = &self.tolerances;
        if !(tol.merge_tol >= 0.0) {
            return invalid("tolerances.merge_tol must be non-negative");
        }
        if !(0.0..=1e-6).contains(&tol.weight_cutoff) {
            return invalid("tolerances.weight_cutoff must lie in [0, 1e-6]");
        }
        if !(tol.degeneracy_tol >= 0.0) {
            return invalid("tolerances.degeneracy_tol must be non-negative");
        }
        if let Sampling::Sampled { count, .. } = self.sampling {
            if count == 0 {
                return invalid("sampling.count must be at least 1");
            }
        }
        if self.solver.dense_limit == 0 {
            return invalid("solver.dense_limit must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_the_reference_grid() {
        let mut c = RunConfig::from_json("{}").unwrap();
        c.validate().unwrap();
        c.resolve();
        assert_eq!(c.sector.n_up, Some(4));
        assert_eq!(c.protocol.vf, Some(-10.0));
        assert_eq!(c.concentrations_a().len(), 7);
        assert_eq!(c.concentrations_a().last(), Some(&75.0));
        assert_eq!(c.concentrations_b(), vec![12.5, 25.0, 37.5, 50.0, 62.5, 75.0, 87.5]);
        assert_eq!(c.temperatures, vec![0.0, 2.0, 30.0]);
        let round = RunConfig::from_json(&c.to_json_pretty()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn rejects_bad_values() {
        let bad_c = r#"{"grids": {"concentration_a": [0, 30]}}"#;
        let err = RunConfig::from_json(bad_c).unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("C = 30"), "{err}");
        let bad_v = r#"{"protocol": {"v0_values": [-1, -10]}}"#;
        assert!(RunConfig::from_json(bad_v).unwrap().validate().is_err());
        assert!(RunConfig::from_json(r#"{"lattice": {"sites": 8, "hoping": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"temperatures": [-1]}"#).unwrap().validate().is_err());
        let sampled = r#"{"sampling": {"mode": "sampled", "count": 10, "seed": 3}}"#;
        assert_eq!(RunConfig::from_json(sampled).unwrap().sampling, Sampling::Sampled { count: 10, seed: 3 });
    }
}
