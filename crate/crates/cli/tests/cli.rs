use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const DEVICE: &str = r#"schema_version = 1

[device]
n_total = 1e11
eta_d = 0.65
dark_count = 8e-7
misalignment_x = 0.005
misalignment_z = 0.005
ec_efficiency = 1.16
epsilon = 1e-7
"#;

const QUICK: &str = r#"
[optimizer]
multistart = 2
neighborhood_samples = 200
full_neighborhood_at_final = false
"#;

const PARAMS: &str = "params = [0.1, 0.3, 0.6, 0.1, 0.1, 0.7, 0.1, 0.3, 0.6, 0.1, 0.1, 0.7]";

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn mdiqkd(args: &[&str], config: &Path, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mdiqkd"));
    cmd.args(args).arg("--config").arg(config);
    if let Some(out) = out {
        cmd.arg("--out").arg(out);
    }
    cmd.output().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn value_of(csv: &str, quantity: &str) -> f64 {
    rows(csv)
        .into_iter()
        .find(|r| r[0] == quantity)
        .unwrap_or_else(|| panic!("{quantity} missing"))[1]
        .parse()
        .unwrap()
}

#[test]
fn ideal_link_yields_key() {
    let dir = TempDir::new().unwrap();
    let body = DEVICE
        .replace("dark_count = 8e-7", "dark_count = 0.0")
        .replace("misalignment_x = 0.005", "misalignment_x = 0.0")
        .replace("misalignment_z = 0.005", "misalignment_z = 0.0");
    let cfg = write(&dir, "c.toml", &format!("{body}\n[channel]\nstable = {{ length_a_km = 0.0, length_b_km = 0.0 }}\n[task]\n{PARAMS}\n"));
    let out = mdiqkd(&["evaluate"], &cfg, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("# config-hash: "));
    assert_eq!(csv.lines().nth(1), Some("quantity,value"));
    assert!(value_of(&csv, "R_per_pair") > 0.0);
    assert_eq!(value_of(&csv, "S_oo"), 0.0);
}

#[test]
fn blind_detectors_yield_zero() {
    let dir = TempDir::new().unwrap();
    let body = DEVICE.replace("eta_d = 0.65", "eta_d = 0.0");
    let cfg = write(&dir, "c.toml", &format!("{body}\n[channel]\nstable = {{ length_a_km = 10.0, length_b_km = 60.0 }}\n[task]\n{PARAMS}\n"));
    let out_path = dir.path().join("r.csv");
    let out = mdiqkd(&["evaluate"], &cfg, Some(&out_path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_path).unwrap();
    assert_eq!(value_of(&csv, "R_per_pair"), 0.0);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("eta_a = 0.00000e0"), "{stderr}");
}

#[test]
fn invalid_config_exits_with_config_category() {
    let dir = TempDir::new().unwrap();
    let body = DEVICE.replace("misalignment_z = 0.005", "misalignment_z = 0.7");
    let cfg = write(&dir, "bad.toml", &format!("{body}\n[channel]\nstable = {{ length_a_km = 1.0, length_b_km = 1.0 }}\n[task]\n{PARAMS}\n"));
    let out = mdiqkd(&["evaluate"], &cfg, None);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error[config]: "), "{stderr}");
    assert!(stderr.contains("line 8: device.misalignment_z"), "{stderr}");
}

#[test]
fn missing_file_exits_with_io_category() {
    let out = mdiqkd(&["evaluate"], Path::new("/nonexistent/cfg.toml"), None);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[io]: "));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let out = Command::new(env!("CARGO_BIN_EXE_mdiqkd")).arg("evaluate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_distance_list_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &format!("{DEVICE}\n[task]\ndistances = []\n"));
    let out = mdiqkd(&["scan-distance"], &cfg, None);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("task.distances"), "{stderr}");
}

#[test]
fn evaluate_without_params_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &format!("{DEVICE}\n[channel]\nstable = {{ length_a_km = 1.0, length_b_km = 1.0 }}\n"));
    let out = mdiqkd(&["evaluate"], &cfg, None);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("task.params"));
}

#[test]
fn optimize_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &format!("{DEVICE}\n[channel]\nstable = {{ length_a_km = 20.0, length_b_km = 40.0 }}\n{QUICK}"));
    let run = |name: &str, extra: &[&str]| {
        let out_path = dir.path().join(format!("{name}.csv"));
        let mut args = vec!["optimize", "--threads", "1"];
        args.extend_from_slice(extra);
        let out = mdiqkd(&args, &cfg, Some(&out_path));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read(&out_path).unwrap();
        let trace = std::fs::read(dir.path().join(format!("{name}.trace.csv"))).unwrap();
        (csv, trace)
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    assert_eq!(a, b);
    let trace = String::from_utf8(a.1.clone()).unwrap();
    assert!(trace.lines().nth(1).unwrap().starts_with("start,iteration,kind,value,projected,mu_ax"));
    assert!(trace.contains(",terminate,"));

    let c = run("c", &["--seed", "5"]);
    let hash = |bytes: &[u8]| String::from_utf8(bytes.to_vec()).unwrap().lines().next().unwrap().to_string();
    assert_ne!(hash(&a.0), hash(&c.0));
}

#[test]
fn symmetric_link_gives_symmetric_optimum() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &format!("{DEVICE}\n[channel]\nstable = {{ length_a_km = 30.0, length_b_km = 30.0 }}\n"));
    let out = mdiqkd(&["optimize"], &cfg, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = rows(&csv)[0].iter().map(|v| v.parse().unwrap()).collect();
    let params = &row[5..];
    for k in 0..6 {
        assert!((params[k] - params[k + 6]).abs() < 1e-2, "k={k}: {:?}", params);
    }
}

#[test]
fn symmetric_sweep_decreases_with_distance() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.toml",
        &format!("{DEVICE}{QUICK}\n[task]\nsweep = {{ total_min_km = 20.0, total_max_km = 140.0, step_km = 60.0 }}\n"),
    );
    let out = mdiqkd(&["scan-distance"], &cfg, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("L_A_km,L_B_km,R_per_pair,mu_ax"));
    let table = rows(&csv);
    assert_eq!(table.len(), 3);
    let rates: Vec<f64> = table.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(table[1][0], "4.00000e1");
    assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
}

#[test]
fn compensation_scan_includes_baseline_and_echoes_thresholds() {
    let dir = TempDir::new().unwrap();
    let channel = "\n[channel]\nunstable = { levels_a = [[5.0, 0.5], [13.0, 0.5]], levels_b = [[15.0, 0.5], [23.0, 0.5]] }\n";
    let cfg = write(&dir, "c.toml", &format!("{DEVICE}{channel}{QUICK}\n[task]\ncells = [[-8.75, 4.5]]\n"));
    let out = mdiqkd(&["scan-compensation"], &cfg, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("cell (-8.75 dB, 4.5 dB): ratio threshold 7.49894e0, attenuation 3.54813e-1"), "{stderr}");
    let csv = String::from_utf8(out.stdout).unwrap();
    let table = rows(&csv);
    assert_eq!(table.len(), 2);
    assert_eq!(&table[0][..4], ["0.00000e0", "0.00000e0", "1.00000e0", "1.00000e0"]);
    assert_eq!(&table[1][..2], ["-8.75000e0", "4.50000e0"]);
}
