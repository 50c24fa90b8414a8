//! Python bindings: a `Model` class for single quenches on one chain, plus
//! module functions running whole sweeps from a JSON configuration.

use hubbard_quench::basis::SectorBasis;
use hubbard_quench::config::RunConfig;
use hubbard_quench::ensemble::SweepRow;
use hubbard_quench::hamiltonian::{potential_delta, Boundary, ImpurityConfig, LatticeSpec};
use hubbard_quench::run;
use hubbard_quench::solver::{ProfileSolver, SolverOptions};
use hubbard_quench::spectra::{diagonalize, thermal_weights};
use hubbard_quench::workstats::tpm_distribution;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Hubbard chain in a fixed particle-number sector.
#[pyclass(frozen)]
pub struct Model {
    solver: ProfileSolver,
}

impl Model {
    fn config(&self, sites: Vec<usize>, strength: f64) -> PyResult<ImpurityConfig> {
        ImpurityConfig::new(sites, strength, self.solver.basis().sites()).map_err(value_err)
    }
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (sites, n_up, n_dn, interaction = -5.0, hopping = 1.0, boundary = "open"))]
    fn new(sites: usize, n_up: usize, n_dn: usize, interaction: f64, hopping: f64, boundary: &str) -> PyResult<Self> {
        let boundary = match boundary {
            "open" => Boundary::Open,
            "periodic" => Boundary::Periodic,
            other => return Err(value_err(format!("unknown boundary `{other}`"))),
        };
        let lattice = LatticeSpec::new(sites, hopping, interaction, boundary);
        lattice.validate().map_err(value_err)?;
        let basis = SectorBasis::new(sites, n_up, n_dn).map_err(value_err)?;
        let solver = ProfileSolver::new(lattice, basis, SolverOptions::default()).map_err(value_err)?;
        Ok(Self { solver })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.solver.basis().dim()
    }

    #[getter]
    fn sites(&self) -> usize {
        self.solver.basis().sites()
    }

    /// Ascending eigenvalues with impurities of `strength` on `impurities`.
    #[pyo3(signature = (impurities, strength))]
    fn spectrum(&self, impurities: Vec<usize>, strength: f64) -> PyResult<Vec<f64>> {
        let c = self.config(impurities, strength)?;
        let h = self.solver.hamiltonian(&c.potential(self.sites())).map_err(value_err)?;
        Ok(diagonalize(&h).map_err(runtime_err)?.values().to_vec())
    }

    /// Two-point-measurement work distribution as `[(w, p), ...]`, ascending in `w`.
    #[pyo3(signature = (initial, final_sites, v0, vf, temperature, merge_tol = 1e-9))]
    fn work_distribution(
        &self,
        initial: Vec<usize>,
        final_sites: Vec<usize>,
        v0: f64,
        vf: f64,
        temperature: f64,
        merge_tol: f64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let l = self.sites();
        let (a, b) = (self.config(initial, v0)?, self.config(final_sites, vf)?);
        let h0 = self.solver.hamiltonian(&a.potential(l)).map_err(value_err)?;
        let hf = self.solver.hamiltonian(&b.potential(l)).map_err(value_err)?;
        let eig0 = diagonalize(&h0).map_err(runtime_err)?;
        let eigf = diagonalize(&hf).map_err(runtime_err)?;
        let w0 = thermal_weights(&eig0, temperature, self.solver.options().weight_cutoff).map_err(value_err)?;
        Ok(tpm_distribution(&eig0, &eigf, &w0, merge_tol).map_err(runtime_err)?.points)
    }

    /// Mean, variance, third central moment and its correlator-route parts.
    #[pyo3(signature = (initial, final_sites, v0, vf, temperature))]
    fn work_moments<'py>(
        &self,
        py: Python<'py>,
        initial: Vec<usize>,
        final_sites: Vec<usize>,
        v0: f64,
        vf: f64,
        temperature: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let l = self.sites();
        let (a, b) = (self.config(initial, v0)?, self.config(final_sites, vf)?);
        let kernels = self.solver.kernels(&a.potential(l), &[temperature]).map_err(runtime_err)?;
        let m = kernels[0].moments(&potential_delta(&a, &b, l));
        let d = PyDict::new(py);
        d.set_item("mean", m.mean)?;
        d.set_item("variance", m.variance)?;
        d.set_item("mu3", m.mu3)?;
        d.set_item("mu3_correlator", m.mu3_correlator)?;
        d.set_item("delta3", m.delta3)?;
        Ok(d)
    }

    /// Per-site linear entropies and their site average for the initial state.
    #[pyo3(signature = (impurities, strength, temperature = 0.0))]
    fn entanglement(&self, impurities: Vec<usize>, strength: f64, temperature: f64) -> PyResult<(Vec<f64>, f64)> {
        let c = self.config(impurities, strength)?;
        let kernels = self.solver.kernels(&c.potential(self.sites()), &[temperature]).map_err(runtime_err)?;
        let e = kernels[0].entanglement();
        Ok((e.per_site, e.site_average))
    }
}

fn row_dict<'py>(py: Python<'py>, r: &SweepRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("protocol", r.protocol)?;
    d.set_item("L", r.sites)?;
    d.set_item("n_up", r.n_up)?;
    d.set_item("n_dn", r.n_dn)?;
    d.set_item("U", r.interaction)?;
    d.set_item("V0", r.v0)?;
    d.set_item("Vf", r.vf)?;
    d.set_item("T", r.temperature)?;
    d.set_item("C_initial", r.c_initial)?;
    d.set_item("N_pairs", r.stats.n_pairs)?;
    d.set_item("mean_W", r.stats.mean_w)?;
    d.set_item("var_W", r.stats.var_w)?;
    d.set_item("mu3_W", r.stats.mu3_w)?;
    d.set_item("delta3", r.stats.delta3)?;
    d.set_item("lin_entropy_avg", r.stats.lin_entropy)?;
    Ok(d)
}

fn prepared(config_json: &str) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::from_json(config_json).map_err(value_err)?;
    run::prepare(&mut cfg).map_err(value_err)?;
    Ok(cfg)
}

/// The default run configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    let mut c = RunConfig::default();
    c.resolve();
    c.to_json_pretty()
}

/// Protocol-A sweep; one dict per `(V, C, T)` row.
#[pyfunction]
fn sweep_concentration<'py>(py: Python<'py>, config_json: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = prepared(config_json)?;
    let out = py.detach(|| run::sweep_concentration_run(&cfg)).map_err(runtime_err)?;
    out.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Protocol-B sweep; one dict per `(V0, C, T)` row.
#[pyfunction]
fn sweep_potential<'py>(py: Python<'py>, config_json: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = prepared(config_json)?;
    let out = py.detach(|| run::sweep_potential_run(&cfg)).map_err(runtime_err)?;
    out.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// The built-in invariant suite as `[(name, passed, detail), ...]`.
#[pyfunction]
fn validate(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(hubbard_quench::validate::run_all).into_iter().map(|r| (r.name.to_owned(), r.passed, r.detail)).collect()
}

#[pymodule]
pub fn hubbard_quench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", hubbard_quench::io::VERSION)?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_concentration, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_potential, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
