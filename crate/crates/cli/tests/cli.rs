use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use proptest::prelude::*;
use robgasp::bench::{maximin_lhd, TestFunction};
use robgasp_cli::table::{format_table, parse_table};

fn robgasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robgasp")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes `design.csv` and `output.csv` for `f` on a maximin design.
fn write_data(dir: &Path, f: TestFunction, n: usize, seed: u64) {
    let d = maximin_lhd(n, f.dim(), seed, 20).unwrap().scale_from_unit(&f.bounds()).unwrap();
    let names: Vec<String> = (1..=f.dim()).map(|l| format!("x{l}")).collect();
    std::fs::write(dir.join("design.csv"), format_table(&names, d.matrix())).unwrap();
    let y = DMatrix::from_fn(n, 1, |i, _| f.eval(&d.row(i)));
    std::fs::write(dir.join("output.csv"), format_table(&["y".to_string()], &y)).unwrap();
}

fn arg(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn emulate_writes_fit_and_interpolating_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_data(dir, TestFunction::Ex1I, 20, 3);
    let out = dir.join("out");
    let o = robgasp(&[
        "emulate",
        "--design",
        &arg(&dir.join("design.csv")),
        "--output",
        &arg(&dir.join("output.csv")),
        "--out",
        &arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = std::fs::read_to_string(out.join("fit.csv")).unwrap();
    assert!(fit.starts_with("input,name,gamma,xi,beta,p"));
    assert_eq!(fit.lines().count(), 3);
    let pred = parse_table(&std::fs::read_to_string(out.join("predictions.csv")).unwrap(), "p").unwrap();
    let y = parse_table(&std::fs::read_to_string(dir.join("output.csv")).unwrap(), "y").unwrap();
    let mean_col = pred.names.iter().position(|n| n == "mean").unwrap();
    for i in 0..20 {
        assert!((pred.data[(i, mean_col)] - y.data[(i, 0)]).abs() < 1e-6 * y.data.column(0).amax());
    }
}

#[test]
fn mismatched_rows_are_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_data(dir, TestFunction::Ex1I, 10, 1);
    std::fs::write(dir.join("short.csv"), "y\n1\n2\n3\n").unwrap();
    let o = robgasp(&[
        "emulate",
        "--design",
        &arg(&dir.join("design.csv")),
        "--output",
        &arg(&dir.join("short.csv")),
        "--out",
        &arg(&dir.join("out")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.starts_with("error[E_DATA]:") && e.lines().count() == 1, "{e}");
}

#[test]
fn missing_and_malformed_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = robgasp(&["emulate", "--design", "/nonexistent/d.csv", "--output", "/nonexistent/y.csv"]);
    assert_eq!(o.status.code(), Some(3));
    std::fs::write(tmp.path().join("bad.csv"), "a,b\n1,2\n3,x\n").unwrap();
    std::fs::write(tmp.path().join("y.csv"), "1\n2\n").unwrap();
    let o = robgasp(&[
        "emulate",
        "--design",
        &arg(&tmp.path().join("bad.csv")),
        "--output",
        &arg(&tmp.path().join("y.csv")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let o = robgasp(&["emulate", "--prior", "reference", "--parameterization", "beta"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[E_CONFIG]:"));
    let o = robgasp(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[E_CONFIG]:"));
    let o = robgasp(&["bench", "--set", "nope=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = robgasp(&["bench", "--case", "ex9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(robgasp(&["--help"]).status.success());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_data(dir, TestFunction::Ex1I, 12, 2);
    std::fs::write(
        dir.join("run.cfg"),
        format!(
            "design = {}\noutput = {}\nprior.kind = reference\nfit.parameterization = beta\n",
            arg(&dir.join("design.csv")),
            arg(&dir.join("output.csv"))
        ),
    )
    .unwrap();
    let cfg = arg(&dir.join("run.cfg"));
    assert_eq!(robgasp(&["emulate", "--config", &cfg]).status.code(), Some(2));
    let o = robgasp(&["emulate", "--config", &cfg, "--prior", "jr", "--out", &arg(&dir.join("o"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn screen_reports_shares_that_sum_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let f = TestFunction::Ex2I;
    write_data(dir, f, 54, 4);
    let out = dir.join("out");
    let o = robgasp(&[
        "screen",
        "--design",
        &arg(&dir.join("design.csv")),
        "--output",
        &arg(&dir.join("output.csv")),
        "--out",
        &arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("screen.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    let p: Vec<f64> = rows.iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let selected: Vec<bool> = rows.iter().map(|r| r.split(',').nth(3).unwrap() == "true").collect();
    assert!(selected[..4].iter().all(|s| *s), "{text}");
}

#[test]
fn bench_ex4_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = robgasp(&["bench", "--case", "ex4", "--seed", "3", "--set", "mcmc.s=800", "--set", "mcmc.s0=200", "--out", &arg(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["ex4_table.csv", "ex4_curves.csv", "ex4_xi.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let table = std::fs::read_to_string(a.join("ex4_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(a.join("ex4_timings.csv").exists());
}

#[test]
fn calibrate_example_writes_chain_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cal");
    let o = robgasp(&["calibrate", "--example", "ex4", "--s", "600", "--s0", "200", "--out", &arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let chain = std::fs::read_to_string(out.join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 601);
    for f in ["predictions.csv", "metrics.csv", "summary.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = robgasp(&["calibrate", "--example", "ex4", "--s", "100", "--s0", "200"]);
    assert_eq!(o.status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tables_round_trip(
        rows in 1usize..8,
        cols in 1usize..5,
        seed in prop::collection::vec(-1e6f64..1e6, 40),
    ) {
        let data = DMatrix::from_fn(rows, cols, |i, j| seed[(i * cols + j) % 40] * 1.000_000_1f64.powi(i as i32));
        let names: Vec<String> = (0..cols).map(|j| format!("c{j}")).collect();
        let t = parse_table(&format_table(&names, &data), "t").unwrap();
        prop_assert_eq!(t.names, names);
        prop_assert_eq!(t.data, data);
    }
}
