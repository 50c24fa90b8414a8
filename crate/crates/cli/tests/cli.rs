use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hubbard_quench::config::RunConfig;
use hubbard_quench::io::{read_header_config, strip_header};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hubbard-quench"));
    c.env_remove("WORKERS");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--output").arg(out).output().expect("binary runs")
}

fn data_rows(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    strip_header(&text).lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn sweep_concentration_writes_the_grid_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep-concentration", "--sites", "4", "--strengths=-3,-6", "--temperatures", "0,2"];
    let a = run(&args, &dir.path().join("a"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let csv = dir.path().join("a/sweep_concentration.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# hubbard-quench "));
    let cfg = read_header_config(&text).expect("config in header");
    assert_eq!(cfg.lattice.sites, 4);
    assert_eq!(cfg.grids.concentration_a, Some(vec![0.0, 25.0, 50.0]));
    let body = strip_header(&text);
    assert!(body
        .starts_with("protocol,L,n_up,n_dn,U,V0,Vf,T,C_initial,N_pairs,mean_W,var_W,mu3_W,delta3,lin_entropy_avg\n"));
    // 2 strengths x 3 concentrations x 2 temperatures
    assert_eq!(data_rows(&csv).len(), 12);
    assert!(dir.path().join("a/sweep_concentration.meta.json").exists());

    let b = bin().args(args).arg("--output").arg(dir.path().join("b")).env("WORKERS", "3").output().unwrap();
    assert!(b.status.success());
    let text_b = fs::read_to_string(dir.path().join("b/sweep_concentration.csv")).unwrap();
    // headers differ only in output_dir and workers
    assert_eq!(strip_header(&text), strip_header(&text_b));
    let again = run(&args, &dir.path().join("a"));
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap(), text);
}

#[test]
fn workers_environment_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep-concentration", "--sites", "3", "--strengths=-4", "--temperatures", "0", "--workers", "1"])
        .arg("--output")
        .arg(dir.path())
        .env("WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("sweep_concentration.csv")).unwrap();
    assert_eq!(read_header_config(&text).unwrap().workers, Some(2));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    fs::write(&cfg_path, r#"{"lattice": {"sites": 4, "interaction": -3.0}, "temperatures": [0, 5]}"#).unwrap();
    let out = bin()
        .args(["sweep-potential", "--config"])
        .arg(&cfg_path)
        .args(["--temperatures", "1", "--v0=-1", "--concentrations", "50"])
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("sweep_potential.csv")).unwrap();
    let cfg: RunConfig = read_header_config(&text).unwrap();
    assert_eq!(cfg.lattice.interaction, -3.0);
    assert_eq!(cfg.temperatures, vec![1.0]);
    assert_eq!(cfg.protocol.vf, Some(-6.0));
    let rows = data_rows(&dir.path().join("sweep_potential.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("B,4,2,2,-3,-1,-6,1,50,36,"), "{}", rows[0]);
}

#[test]
fn invalid_grids_are_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let bad_c = run(&["sweep-concentration", "--sites", "8", "--concentrations", "0,30"], dir.path());
    assert_eq!(bad_c.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_c.stderr).contains("C = 30%"));
    let bad_v = run(&["sweep-potential", "--v0=-1,-10"], dir.path());
    assert_eq!(bad_v.status.code(), Some(2));
    let bad_json = dir.path().join("bad.json");
    fs::write(&bad_json, r#"{"lattice": {"sites": 4, "colour": 1}}"#).unwrap();
    let parse = bin().args(["entanglement", "--config"]).arg(&bad_json).output().unwrap();
    assert_eq!(parse.status.code(), Some(2));
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| e.unwrap().file_name() == "bad.json"));
}

#[test]
fn distribution_uses_one_pair_at_every_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["distribution", "--sites", "4", "--temperatures", "0,30", "--pair-seed", "11"];
    let out = run(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index = data_rows(&dir.path().join("distribution_pairs.csv"));
    assert_eq!(index.len(), 6);
    for pair in index.chunks(2) {
        let f0: Vec<&str> = pair[0].split(',').collect();
        let f1: Vec<&str> = pair[1].split(',').collect();
        assert_eq!(f0[2..4], f1[2..4], "same configurations at both temperatures");
        assert!(f1[4].parse::<usize>().unwrap() > f0[4].parse::<usize>().unwrap(), "wider at T=30");
    }
    let rows = data_rows(&dir.path().join("distribution_C25_T30.csv"));
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let (w, p) = r.split_once(',').unwrap();
            (w.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
    let total: f64 = points.iter().map(|p| p.1).sum();
    assert!(total > 1.0 - 1e-8 && total <= 1.0 + 1e-12);

    let again = tempfile::tempdir().unwrap();
    assert!(run(&args, again.path()).status.success());
    assert_eq!(data_rows(&again.path().join("distribution_pairs.csv")), index, "pair selection fixed by the seed");
}

#[test]
fn entanglement_summary_and_site_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["entanglement", "--sites", "4", "--temperatures", "0", "--strengths=-10", "--site-tables"])
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let rows = data_rows(&dir.path().join("entanglement.csv"));
    assert_eq!(rows.len(), 4);
    let values: Vec<f64> = rows.iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(values[2], min, "minimum at half filling of impurities");
    let table = fs::read_to_string(dir.path().join("entanglement_sites_Vm10_C50_T0.csv")).unwrap();
    assert!(strip_header(&table).starts_with("site,p_empty,p_up,p_dn,p_double,lin_entropy\n"));
}

#[test]
fn sampled_sweep_on_a_longer_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "sweep-potential",
            "--sites",
            "12",
            "--n-up",
            "3",
            "--n-dn",
            "3",
            "--v0=-1",
            "--concentrations",
            "25",
            "--temperatures",
            "0",
            "--samples",
            "3",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("sweep_potential.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("B,12,3,3,-5,-1,-10,0,25,3,"), "{}", rows[0]);
    let meta = fs::read_to_string(dir.path().join("sweep_potential.meta.json")).unwrap();
    assert!(meta.contains("\"exhaustive\": false"));
}

#[test]
fn validate_prints_a_passing_table() {
    let out = bin().arg("validate").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS  critical-state oracle"));
    assert!(!stdout.contains("FAIL"));
}
