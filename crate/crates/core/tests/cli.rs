use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use graphflow::cli::{sweep, RunConfig, SweepAxis};

const KEYS: [&str; 12] = [
    "schema_version",
    "termination",
    "classification",
    "steps",
    "final_t",
    "dt0",
    "records",
    "image_diameter",
    "tolerances",
    "decay_report",
    "config",
    "wall_time_s",
];

const COLUMNS: &str = "t,dt,min_rho,min_gap,min_u1,max_normA2,max_normH2,area,dArea_dt_est,int_normA2_gt,int_normA2_gM,gauss_residual_max,envelope_value,envelope_margin,int_normH2_gt";

fn graphflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphflow"))
        .args(args)
        .env("GRAPHFLOW_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let out = dir.join("out");
    let text = format!("schema_version = 1\n{body}\n[output]\ndir = {:?}\nrecord_every = 5\n", out.to_str().unwrap());
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

const TORI: &str = "[domain]\nkind = \"flat_torus\"\n[target]\nkind = \"flat_torus\"\n";

#[test]
fn identity_run_is_totally_geodesic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{TORI}[initial_map]\nfamily = \"identity\"\n[grid]\nn1 = 32\nn2 = 32\n"));
    let out = graphflow(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    for k in KEYS {
        assert!(s.get(k).is_some(), "missing key {k}");
    }
    assert_eq!(s["classification"], "TotallyGeodesic");
    assert_eq!(s["termination"], "Converged");
    let csv = fs::read_to_string(tmp.path().join("out/series.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], COLUMNS);
    assert_eq!(lines.len(), 2);
}

#[test]
fn sphere_contraction_reaches_constant_map() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[domain]\nkind = \"round_sphere\"\n[target]\nkind = \"round_sphere\"\n\
                [initial_map]\nfamily = \"rot_sym\"\nprofile = \"fold\"\na = 0.5\n\
                [grid]\nn1 = 24\nn2 = 24\n[flow]\nt_max = 10.0\n";
    let cfg = write_config(tmp.path(), body);
    let out = graphflow(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    assert_eq!(s["classification"], "ConstantMap");
    assert_eq!(s["termination"], "Converged");
    assert_eq!(s["decay_report"]["pass"], true);
    let csv = fs::read_to_string(tmp.path().join("out/series.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    let steps = s["steps"].as_u64().unwrap() as usize;
    assert_eq!(rows, 1 + steps / 5 + usize::from(steps % 5 != 0));
}

#[test]
fn curvature_hypothesis_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[domain]\nkind = \"flat_torus\"\n[target]\nkind = \"round_sphere\"\n\
                [initial_map]\nfamily = \"constant\"\npoint = [1.0, 0.0]\n[grid]\nn1 = 16\nn2 = 16\n";
    let out = graphflow(&["run", &write_config(tmp.path(), body)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("curvature hypothesis"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn guard_trip_still_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{TORI}[initial_map]\nfamily = \"perturbed_linear\"\nmatrix = [[3.0, 0.0], [0.0, 3.0]]\n\
         amplitude = 0.01\nmodes = [{{ k = [1, 1], direction = [1.0, 0.0] }}]\n[grid]\nn1 = 16\nn2 = 16\n[flow]\nu1_floor = 0.1\n"
    );
    let out = graphflow(&["run", &write_config(tmp.path(), &body)]);
    assert_eq!(out.status.code(), Some(3));
    let s = summary(tmp.path());
    assert_eq!(s["termination"], "GraphicalityLoss");
    for k in KEYS {
        assert!(s.get(k).is_some(), "missing key {k}");
    }
}

#[test]
fn io_failures_exit_4() {
    let out = graphflow(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(4));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{TORI}[initial_map]\nfamily = \"identity\"\n[grid]\nn1 = 16\nn2 = 16\n"));
    // a plain file where the output directory should go
    fs::write(tmp.path().join("out"), "").unwrap();
    assert_eq!(graphflow(&["run", &cfg]).status.code(), Some(4));
}

#[test]
fn check_table_has_three_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{TORI}[initial_map]\nfamily = \"constant\"\npoint = [0.2, 0.3]\n[grid]\nn1 = 16\nn2 = 16\n");
    let out = graphflow(&["check", &write_config(tmp.path(), &body)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert!(rows.iter().all(|r| r.contains("PASS")));
    assert!(text.contains("machine precision"));
}

#[test]
fn under_resolved_check_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{TORI}[initial_map]\nfamily = \"perturbed_linear\"\namplitude = 0.05\n\
         modes = [{{ k = [3, 2], direction = [0.0, 1.0] }}]\n[grid]\nn1 = 8\nn2 = 8\n"
    );
    let out = graphflow(&["check", &write_config(tmp.path(), &body)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    let row = text.lines().find(|l| l.starts_with("gauss_refinement")).unwrap();
    assert!(row.contains("FAIL") && row.contains("under-resolved"), "{row}");
}

fn perturbed_identity(dir: &Path, n: usize, extra: &str) -> RunConfig {
    let body = format!(
        "{TORI}[initial_map]\nfamily = \"perturbed_linear\"\namplitude = 0.01\n\
         modes = [{{ k = [1, 0], direction = [0.0, 1.0] }}, {{ k = [1, 1], direction = [1.0, 0.0], phase = 0.3 }}]\n\
         [grid]\nn1 = {n}\nn2 = {n}\n{extra}"
    );
    RunConfig::load(Path::new(&write_config(dir, &body))).unwrap()
}

#[test]
fn grid_sweep_is_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let base = perturbed_identity(tmp.path(), 32, "[flow]\nmax_steps = 1\n");
    let (rows, _) = sweep(&base, SweepAxis::Grid, &[32.0, 64.0, 128.0]).unwrap();
    for r in &rows[1..] {
        let o = r.order.unwrap();
        assert!((1.7..=2.3).contains(&o), "order {o}");
    }
    assert!(tmp.path().join("out/grid_64/series.csv").exists());
}

#[test]
fn dt_sweep_heun_is_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let base = perturbed_identity(tmp.path(), 16, "[flow]\nt_max = 0.02\nh_tol = 1e-12\n");
    let (rows, _) = sweep(&base, SweepAxis::Dt, &[4e-4, 2e-4, 1e-4, 5e-5]).unwrap();
    let o = rows[1].order.unwrap();
    assert!((1.7..=2.3).contains(&o), "order {o}");
}

#[test]
fn sweep_command_prints_orders() {
    let tmp = tempfile::tempdir().unwrap();
    perturbed_identity(tmp.path(), 16, "[flow]\nmax_steps = 1\n");
    let cfg = tmp.path().join("run.toml");
    let out = graphflow(&["sweep", cfg.to_str().unwrap(), "--axis", "grid", "--values", "16,32"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().next().unwrap().contains("order"));
    assert_eq!(text.lines().count(), 3);
    let single = graphflow(&["sweep", cfg.to_str().unwrap(), "--axis", "grid", "--values", "16"]);
    assert_eq!(single.status.code(), Some(0));
    assert!(tmp.path().join("out/grid_16/summary.json").exists());
    let bad = graphflow(&["sweep", cfg.to_str().unwrap(), "--axis", "colour", "--values", "16"]);
    assert_eq!(bad.status.code(), Some(2));
}
