use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use singctrl_core::ocp::Mesh;
use singctrl_core::problems::{fishery_exact, FisheryParams};
use tempfile::TempDir;

fn singctrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singctrl"))
        .args(args)
        .env_remove("SINGCTRL_THREADS")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", dir.to_str().unwrap()]);
    singctrl(&full)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter()
        .filter(|r| !r[i].is_empty())
        .map(|r| r[i].parse().unwrap())
        .collect()
}

#[test]
fn fishery_solve_writes_consistent_files() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["solve", "--problem", "fishery"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&tmp.path().join("report.json"));
    let channel = &report["channels"][0];
    let h = 10.0 / 750.0;
    assert!((channel["first_upper"].as_f64().unwrap() - 9.5333).abs() <= 2.0 * h);
    assert_eq!(channel["oscillating"], Value::Bool(false));

    let (header, rows) = table(&tmp.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "u_1", "x_1", "lambda_1", "phi_1"]);
    assert_eq!(rows.len(), 751);
    // the printed controls reproduce the reported error exactly
    let u = column(&header, &rows, "u_1");
    let exact = fishery_exact(FisheryParams::default()).unwrap();
    let mesh = Mesh::new(10.0, 750).unwrap();
    let l1 = singctrl_core::analysis::grid_l1_error(&u, |t| exact.control(t), &mesh);
    assert_eq!(l1, channel["l1_error"].as_f64().unwrap());
    assert!(fs::read_to_string(tmp.path().join("solver.log"))
        .unwrap()
        .contains("converged"));
}

#[test]
fn report_keys_are_the_same_for_every_problem() {
    let keys = |args: &[&str]| {
        let tmp = TempDir::new().unwrap();
        let out = run_in(tmp.path(), args);
        assert!(out.status.success(), "{}", stderr(&out));
        let report = json(&tmp.path().join("report.json"));
        let mut top: Vec<String> = report.as_object().unwrap().keys().cloned().collect();
        top.extend(report["channels"][0].as_object().unwrap().keys().cloned());
        top.extend(report["solver"].as_object().unwrap().keys().cloned());
        top
    };
    let fishery = keys(&["solve", "--problem", "fishery", "--n", "60"]);
    assert_eq!(
        keys(&["solve", "--problem", "plant", "--case", "2c", "--n", "60"]),
        fishery
    );
    assert_eq!(keys(&["solve", "--problem", "sir", "--n", "60"]), fishery);
}

#[test]
fn identical_runs_give_identical_csv() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = [
        "sweep",
        "--problem",
        "plant",
        "--case",
        "2b",
        "--n",
        "120",
        "--rho",
        "0,0.001",
    ];
    assert!(run_in(a.path(), &args).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_singctrl"))
        .args(args)
        .args(["--out", b.path().to_str().unwrap()])
        .env("SINGCTRL_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    for file in [
        "sweep.csv",
        "rho_0/trajectory.csv",
        "rho_0.001/trajectory.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn sweep_rows_follow_input_order() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["sweep", "--n", "150", "--rho", "0.1,0,0.01"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = table(&tmp.path().join("sweep.csv"));
    assert_eq!(
        &header[..4],
        ["rho", "status", "objective", "penalized_objective"]
    );
    assert_eq!(column(&header, &rows, "rho"), [0.1, 0.0, 0.01]);
    assert_eq!(
        rows[1][header.iter().position(|h| h == "oscillating_1").unwrap()],
        "true"
    );
    for dir in ["rho_0.1", "rho_0", "rho_0.01"] {
        let report = json(&tmp.path().join(dir).join("report.json"));
        assert!(report["objective"].is_number());
    }
}

#[test]
fn convergence_table_and_fit() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(
        tmp.path(),
        &["convergence", "--steps", "0.2,0.1,0.05,0.025"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = table(&tmp.path().join("convergence.csv"));
    assert_eq!(header, ["h", "err_h", "ratio", "log2ratio"]);
    assert_eq!(rows.len(), 4);
    let err = column(&header, &rows, "err_h");
    let ratio = column(&header, &rows, "ratio");
    assert_eq!(ratio.len(), 3);
    assert!((ratio[0] - err[0] / err[1]).abs() <= 1e-15 * ratio[0]);
    let fit = json(&tmp.path().join("fit.json"));
    assert_eq!(fit["all"]["points"], 4);

    let single = TempDir::new().unwrap();
    let out = run_in(single.path(), &["convergence", "--steps", "0.1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(single.path().join("convergence.csv").exists());
    assert!(!single.path().join("fit.json").exists());
}

#[test]
fn plant_comparison_reports_entry_times() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(
        tmp.path(),
        &["compare", "--problem", "plant", "--case", "2c"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let errors = json(&tmp.path().join("errors.json"));
    let detected = errors["detected_switches"][1]["time"].as_f64().unwrap();
    assert!((detected - 1.5733).abs() < 1e-4);
    assert!((errors["exact_switches"][0].as_f64().unwrap() - 1.5778).abs() < 1e-3);
    assert!(errors["l1_error"].as_f64().unwrap() <= 0.05);
    let (header, rows) = table(&tmp.path().join("compare.csv"));
    assert_eq!(
        header,
        [
            "t",
            "u_num",
            "u_exact",
            "diff",
            "x_1_num",
            "x_1_exact",
            "x_2_num",
            "x_2_exact"
        ]
    );
    assert_eq!(rows.len(), 751);
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "problem = \"plant\"\ncase = \"2b\"\nn = 150\nrho = 0.0\nhorizon = 4.0\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = run_in(
        &out_dir,
        &["solve", "--config", cfg.to_str().unwrap(), "--n", "100"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["intervals"], 100);
    assert!((report["step"].as_f64().unwrap() - 0.04).abs() < 1e-15);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let bad = |args: &[&str], needle: &str| {
        let out = run_in(tmp.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).contains(needle), "{args:?}: {}", stderr(&out));
    };
    bad(&["solve", "--rho", "1.5"], "rho");
    bad(&["sweep", "--rho="], "rho");
    bad(&["compare", "--problem", "sir"], "no analytic oracle");
    bad(&["solve", "--n", "1"], "n:");
    bad(&["solve", "--problem", "orbit"], "problem");
    bad(&["solve", "--problem", "fishery", "--case", "2a"], "case");
    bad(&["convergence", "--steps", "0.3"], "steps");

    let cfg = tmp.path().join("empty.toml");
    fs::write(&cfg, "rho = []\n").unwrap();
    bad(&["sweep", "--config", cfg.to_str().unwrap()], "rho");
    fs::write(&cfg, "growth_rate = 2.0\n").unwrap();
    bad(&["solve", "--config", cfg.to_str().unwrap()], "growth_rate");

    let out = Command::new(env!("CARGO_BIN_EXE_singctrl"))
        .args(["solve", "--out", tmp.path().to_str().unwrap()])
        .env("SINGCTRL_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_one_and_keeps_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["solve", "--max-iters", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("max-iters"));
    let report = json(&tmp.path().join("report.json"));
    assert_eq!(report["solver"]["termination"], "max-iters");
}
