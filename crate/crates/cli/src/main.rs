use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hubbard_quench::config::RunConfig;
use hubbard_quench::ensemble::{Pairing, Sampling};
use hubbard_quench::error::Error;
use hubbard_quench::hamiltonian::Boundary;
use hubbard_quench::run;
use hubbard_quench::solver::SolverMode;
use hubbard_quench::validate;

/// Work statistics and entanglement of impurity quenches in the attractive
/// Hubbard chain.
#[derive(Parser, Debug)]
#[command(name = "hubbard-quench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Protocol A: raise the impurity concentration by one site.
    SweepConcentration(Overrides),
    /// Protocol B: deepen the impurity potential from V0 to Vf.
    SweepPotential(Overrides),
    /// Full work distributions for one seeded pair per concentration.
    Distribution(Overrides),
    /// Configuration-averaged single-site linear entropy of initial states.
    Entanglement {
        #[command(flatten)]
        overrides: Overrides,
        /// Also write one averaged site table per (V, C, T).
        #[arg(long)]
        site_tables: bool,
    },
    /// Run the built-in invariant suite and print a pass/fail table.
    Validate,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration; flags below override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    n_up: Option<usize>,
    #[arg(long)]
    n_dn: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    hopping: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    interaction: Option<f64>,
    #[arg(long, value_parser = parse_boundary)]
    boundary: Option<Boundary>,
    /// Comma-separated temperatures in units of J/k_B.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    temperatures: Option<Vec<f64>>,
    /// Comma-separated impurity strengths (protocol A, entanglement scan, or
    /// the distribution strength when a single value is given).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    strengths: Option<Vec<f64>>,
    /// Comma-separated initial strengths for protocol B.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v0: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    vf: Option<f64>,
    /// Comma-separated initial concentrations in percent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    concentrations: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_pairing)]
    pairing: Option<Pairing>,
    /// Draw this many random pairs per grid point instead of enumerating.
    #[arg(long)]
    samples: Option<usize>,
    /// Seed for sampled mode.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed selecting the pair of the `distribution` command.
    #[arg(long)]
    pair_seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverMode>,
}

fn parse_boundary(s: &str) -> Result<Boundary, String> {
    match s {
        "open" => Ok(Boundary::Open),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(format!("unknown boundary `{s}` (open | periodic)")),
    }
}

fn parse_pairing(s: &str) -> Result<Pairing, String> {
    match s {
        "resample" => Ok(Pairing::Resample),
        "superset" => Ok(Pairing::Superset),
        _ => Err(format!("unknown pairing `{s}` (resample | superset)")),
    }
}

fn parse_solver(s: &str) -> Result<SolverMode, String> {
    match s {
        "auto" => Ok(SolverMode::Auto),
        "dense" => Ok(SolverMode::Dense),
        "iterative" => Ok(SolverMode::Iterative),
        _ => Err(format!("unknown solver `{s}` (auto | dense | iterative)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    ProtocolA,
    ProtocolB,
    Distribution,
    Entanglement,
}

fn load(o: &Overrides, target: Target) -> anyhow::Result<RunConfig> {
    let mut c = match &o.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &o.output {
        c.output_dir = v.clone();
    }
    if let Some(v) = o.sites {
        c.lattice.sites = v;
    }
    if let Some(v) = o.hopping {
        c.lattice.hopping = v;
    }
    if let Some(v) = o.interaction {
        c.lattice.interaction = v;
    }
    if let Some(v) = o.boundary {
        c.lattice.boundary = v;
    }
    if o.n_up.is_some() {
        c.sector.n_up = o.n_up;
    }
    if o.n_dn.is_some() {
        c.sector.n_dn = o.n_dn;
    }
    if let Some(v) = &o.temperatures {
        c.temperatures = v.clone();
    }
    if let Some(v) = &o.strengths {
        match target {
            Target::Entanglement => c.protocol.entanglement_strengths = v.clone(),
            Target::Distribution => {
                anyhow::ensure!(v.len() == 1, "distribution takes a single --strengths value");
                c.protocol.distribution_strength = v[0];
            }
            _ => c.protocol.strengths = v.clone(),
        }
    }
    if let Some(v) = &o.v0 {
        c.protocol.v0_values = v.clone();
    }
    if o.vf.is_some() {
        c.protocol.vf = o.vf;
    }
    if let Some(v) = &o.concentrations {
        let grid = Some(v.clone());
        match target {
            Target::ProtocolA | Target::Distribution => c.grids.concentration_a = grid,
            Target::ProtocolB => c.grids.concentration_b = grid,
            Target::Entanglement => c.grids.concentration_entanglement = grid,
        }
    }
    if let Some(v) = o.pairing {
        c.protocol.pairing = v;
    }
    if let Some(count) = o.samples {
        c.sampling = Sampling::Sampled { count, seed: o.seed };
    }
    if let Some(v) = o.pair_seed {
        c.pair_seed = v;
    }
    if o.workers.is_some() {
        c.workers = o.workers;
    }
    if o.no_cache {
        c.cache.enabled = false;
    }
    if let Some(v) = o.solver {
        c.solver.mode = v;
    }
    // WORKERS from the environment beats both file and flag
    if std::env::var_os("WORKERS").is_some() {
        c.workers = Some(c.effective_workers());
    }
    run::prepare(&mut c)?;
    Ok(c)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::SweepConcentration(o) => {
            let cfg = load(&o, Target::ProtocolA)?;
            let out = run::sweep_concentration_run(&cfg)?;
            report(&[run::write_sweep(&cfg, "sweep-concentration", "sweep_concentration", &out)?]);
        }
        Command::SweepPotential(o) => {
            let cfg = load(&o, Target::ProtocolB)?;
            let out = run::sweep_potential_run(&cfg)?;
            report(&[run::write_sweep(&cfg, "sweep-potential", "sweep_potential", &out)?]);
        }
        Command::Distribution(o) => {
            let cfg = load(&o, Target::Distribution)?;
            let records = run::distribution_run(&cfg)?;
            report(&run::write_distributions(&cfg, &records)?);
        }
        Command::Entanglement { overrides, site_tables } => {
            let cfg = load(&overrides, Target::Entanglement)?;
            let rows = run::entanglement_run(&cfg)?;
            report(&run::write_entanglement(&cfg, &rows, site_tables)?);
        }
        Command::Validate => {
            let results = validate::run_all();
            print!("{}", validate::render_table(&results));
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", results.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli).context("hubbard-quench failed") {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.chain().any(|c| {
                matches!(c.downcast_ref::<Error>(), Some(Error::Config(_)))
                    || c.downcast_ref::<hubbard_quench::config::ConfigError>().is_some()
            });
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
