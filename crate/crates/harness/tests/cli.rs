use std::path::Path;
use std::process::{Command, Output};

use ddmhe_core::analysis::BOUND_KEYS;
use tempfile::TempDir;

fn ddmhe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddmhe"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

const NOISELESS: [&str; 6] = [
    "--set",
    "sigma_w=0",
    "--set",
    "sigma_v=0",
    "--set",
    "sigma_chi=0",
];

#[test]
fn collect_reports_excitation_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = ddmhe(&a, &["collect", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("persistent excitation: true (rank 24 of 24)"));
    assert!(read(&a, "dataset.txt").contains("500"));
    ddmhe(&b, &["collect", "--seed", "3"]);
    assert_eq!(read(&a, "dataset.txt"), read(&b, "dataset.txt"));
}

#[test]
fn too_few_segments_exit_2() {
    let tmp = TempDir::new().unwrap();
    let o = ddmhe(tmp.path(), &["collect", "--set", "N=23"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("persistent excitation"));
}

#[test]
fn bad_config_exits_1() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        ddmhe(tmp.path(), &["collect", "--set", "bogus=1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        ddmhe(tmp.path(), &["collect", "--set", "trials=0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn config_file_then_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    std::fs::write(&cfg, "# small run\nN = 40\nL = 4\nseed = 9\n").unwrap();
    let o = ddmhe(
        tmp.path(),
        &[
            "collect",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "N=30",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("30 segments, L = 4"));
}

#[test]
fn noiseless_estimate_is_exact() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["estimate", "--set", "alpha=1e-6", "--set", "N=50"];
    args.extend(NOISELESS);
    let o = ddmhe(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(tmp.path(), "estimates.csv");
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 3 * 4 + 2);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 100 - 10 + 1);
    for r in &rows {
        for i in 0..4 {
            assert!(
                (r[6 + i] - r[10 + i]).abs() <= 1e-8,
                "ddmhe and mbmhe differ at t = {}",
                r[0]
            );
        }
        if r[0] >= 20.0 {
            assert!(r[14] <= 1e-6, "error {} at t = {}", r[14], r[0]);
        }
    }
}

#[test]
fn estimate_reuses_a_saved_dataset() {
    let tmp = TempDir::new().unwrap();
    assert!(ddmhe(tmp.path(), &["collect"]).status.success());
    let ds = tmp.path().join("dataset.txt");
    let a = ddmhe(tmp.path(), &["estimate", "--dataset", ds.to_str().unwrap()]);
    let from_file = read(tmp.path(), "estimates.csv");
    let b = ddmhe(tmp.path(), &["estimate"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(from_file, read(tmp.path(), "estimates.csv"));
}

#[test]
fn bounds_report_has_the_documented_keys() {
    let tmp = TempDir::new().unwrap();
    let o = ddmhe(tmp.path(), &["bounds", "--set", "trials=5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(tmp.path(), "bounds.txt");
    let keys: Vec<&str> = text.lines().map(|l| l.split_once('=').unwrap().0).collect();
    let golden = include_str!("golden/bounds_keys.txt");
    assert_eq!(keys, golden.lines().collect::<Vec<_>>());
    assert_eq!(keys, BOUND_KEYS);
    let value = |k: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap()
            .to_string()
    };
    assert!(value("c1").parse::<f64>().unwrap() < 1.0);
    assert_eq!(value("contracts"), "true");
    assert_eq!(value("alpha_guaranteed"), "true");
    assert_eq!(value("N0_source"), "truth");
}

#[test]
fn bounds_on_noiseless_data_give_vanishing_c2() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["bounds", "--set", "trials=3"];
    args.extend(NOISELESS);
    let o = ddmhe(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(tmp.path(), "bounds.txt");
    let c2: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("c2="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(c2 <= 1e-9, "c2 = {c2}");
}

#[test]
fn surrogate_bounds_omit_truth_values() {
    let tmp = TempDir::new().unwrap();
    let o = ddmhe(
        tmp.path(),
        &["bounds", "--set", "truth=false", "--set", "trials=2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(tmp.path(), "bounds.txt");
    assert!(text.contains("N0_source=surrogate\n"));
    assert!(text.contains("delta_G=na\n"));
}

#[test]
fn eps_beyond_eps0_exits_4() {
    let tmp = TempDir::new().unwrap();
    let o = ddmhe(
        tmp.path(),
        &["bounds", "--set", "eps=10", "--set", "trials=1"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn sweep_row_count_and_plot_files() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "sweep",
        "--set",
        "sweep_N=100,200,400",
        "--set",
        "sweep_sigma=0.002,0.01",
        "--set",
        "trials=3",
    ];
    let o = ddmhe(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        read(tmp.path(), "results.csv").lines().count(),
        1 + 3 * 2 * 3 * 2
    );
    assert_eq!(read(tmp.path(), "gaps.csv").lines().count(), 1 + 6);
    assert_eq!(read(tmp.path(), "summary.txt").lines().count(), 2);

    let inputs = ["plotdata", "--input", "RESULTS", "--input", "GAPS"];
    let results = tmp.path().join("results.csv");
    let gaps = tmp.path().join("gaps.csv");
    let args: Vec<&str> = inputs
        .iter()
        .map(|a| match *a {
            "RESULTS" => results.to_str().unwrap(),
            "GAPS" => gaps.to_str().unwrap(),
            s => s,
        })
        .collect();
    assert!(ddmhe(tmp.path(), &args).status.success());
    assert_eq!(read(tmp.path(), "plot_amse.csv").lines().count(), 1 + 6);
    let plot_gap = read(tmp.path(), "plot_gap.csv");
    assert_eq!(plot_gap.lines().count(), 1 + 6);
    assert!(!plot_gap.contains("na"));
}

#[test]
fn single_cell_single_trial_gives_two_rows() {
    let tmp = TempDir::new().unwrap();
    let o = ddmhe(tmp.path(), &["sweep", "--set", "trials=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(tmp.path(), "results.csv");
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("\nddmhe,0,500,") && csv.contains("\nmbmhe,0,500,"));
}

#[test]
fn plotdata_on_header_only_input() {
    let tmp = TempDir::new().unwrap();
    let results = tmp.path().join("results.csv");
    std::fs::write(&results, "method,trial,N,sigma_w,sigma_v,mse\n").unwrap();
    let est = tmp.path().join("est.csv");
    std::fs::write(
        &est,
        "t,k,x1,x2,ddmhe1,ddmhe2,mbmhe1,mbmhe2,err_ddmhe,err_mbmhe\n",
    )
    .unwrap();
    let o = ddmhe(
        tmp.path(),
        &[
            "plotdata",
            "--input",
            results.to_str().unwrap(),
            "--input",
            est.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        read(tmp.path(), "plot_amse.csv"),
        "sigma,N,amse_ddmhe,amse_mbmhe\n"
    );
    assert_eq!(
        read(tmp.path(), "plot_trace_x1.csv"),
        "k,truth,ddmhe,mbmhe\n"
    );
    assert_eq!(
        read(tmp.path(), "plot_trace_x2.csv"),
        "k,truth,ddmhe,mbmhe\n"
    );
}

#[test]
fn plotdata_traces_one_file_per_state() {
    let tmp = TempDir::new().unwrap();
    assert!(ddmhe(tmp.path(), &["estimate"]).status.success());
    let est = tmp.path().join("estimates.csv");
    assert!(
        ddmhe(tmp.path(), &["plotdata", "--input", est.to_str().unwrap()])
            .status
            .success()
    );
    for i in 1..=4 {
        assert_eq!(
            read(tmp.path(), &format!("plot_trace_x{i}.csv"))
                .lines()
                .count(),
            1 + 91
        );
    }
    assert!(!tmp.path().join("plot_trace_x5.csv").exists());
}

#[test]
fn plotdata_rejects_malformed_csv() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(
        &bad,
        "method,trial,N,sigma_w,sigma_v,mse\nddmhe,zero,1,1,1,1\n",
    )
    .unwrap();
    let o = ddmhe(tmp.path(), &["plotdata", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("parse error"));
}
