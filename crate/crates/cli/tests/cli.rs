use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tapevar_core::{parse_tape, FrequencyDistribution};

const TWO_TRADES: &str = "t,value,volume\n1,4,2\n2,9,3\n";

fn tapevar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tapevar"))
        .args(args)
        .env_remove("TAPEVAR_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn field(row: &str, i: usize) -> &str {
    row.split(',').nth(i).unwrap()
}

#[test]
fn compare_two_trade_tape() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "two.csv", TWO_TRADES);
    let out = stdout(&tapevar(&["compare", "--input", &tape, "--center", "2", "--delta", "2", "--eps", "0.05"]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("epsilon,measure,p_epsilon,mean,sigma,warnings"));
    let rows: Vec<&str> = lines.collect();
    for m in ["frequency-empirical", "frequency-gaussian", "market-gaussian"] {
        assert!(rows.iter().any(|r| field(r, 1) == m), "missing {m}: {out}");
    }
    let div = rows.iter().find(|r| field(r, 1) == "divergence").unwrap();
    let d: f64 = field(div, 2).parse().unwrap();
    assert!((d + 0.455).abs() < 5e-3, "{d}");
}

#[test]
fn simulated_constant_tape_moments() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("c.csv");
    let tape = tape.to_str().unwrap();
    stdout(&tapevar(&[
        "simulate",
        "--count",
        "3",
        "--seed",
        "0",
        "--const-price",
        "5",
        "--const-volume",
        "1",
        "-o",
        tape,
    ]));
    let json: serde_json::Value = serde_json::from_str(&stdout(&tapevar(&["moments", "--input", tape]))).unwrap();
    for row in json["rows"].as_array().unwrap() {
        let n = row["n"].as_i64().unwrap() as i32;
        assert_eq!(row["p"].as_f64(), Some(5f64.powi(n)));
        assert_eq!(row["pi"].as_f64(), Some(5f64.powi(n)));
    }
}

#[test]
fn empirical_var_on_two_prices() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "p.csv", "t,value,volume\n0,2,1\n1,3,1\n");
    let out = stdout(&tapevar(&[
        "var",
        "--input",
        &tape,
        "--measure",
        "frequency-empirical",
        "--eps",
        "0.6",
        "--format",
        "csv",
    ]));
    let row = out.lines().nth(1).unwrap();
    assert!(row.starts_with("0.6,frequency-empirical,3,"), "{row}");
}

#[test]
fn malformed_input_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "bad.csv", "t,value,volume\n0,1,1\n1,oops,1\n");
    let o = tapevar(&["moments", "--input", &tape]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("line 3"), "{err}");

    let missing = dir.path().join("nope.csv");
    assert_eq!(tapevar(&["moments", "--input", missing.to_str().unwrap()]).status.code(), Some(2));

    let good = write(dir.path(), "good.csv", TWO_TRADES);
    let o = tapevar(&["compare", "--input", &good, "--center", "50", "--delta", "1"]);
    assert_eq!(o.status.code(), Some(2), "empty window");
    let o = tapevar(&["compare", "--input", &good, "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "epsilon out of range");
}

#[test]
fn negative_variance_alone_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "neg.csv", "t,value,volume\n0,100,1\n1,180,2\n");
    let o = tapevar(&["var", "--input", &tape, "--measure", "market-gaussian", "--eps", "0.05"]);
    assert_eq!(o.status.code(), Some(3));

    // The same condition inside a full report is only a warning.
    let o = tapevar(&["compare", "--input", &tape, "--eps", "0.05"]);
    let out = stdout(&o);
    assert!(out.lines().skip(1).all(|r| !field(r, 1).starts_with("market")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative-variance"));
}

#[test]
fn simulated_tape_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    let path = path.to_str().unwrap();
    stdout(&tapevar(&["simulate", "--count", "500", "--seed", "9", "--lots", "20", "-o", path]));
    let text = fs::read_to_string(path).unwrap();
    let tape = parse_tape(&text, "sim").unwrap();
    assert_eq!(tape.len(), 500);
    assert_eq!(tape.to_csv(), text);
}

#[test]
fn density_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "d.csv", "t,value,volume\n0,10,1\n1,24,2\n2,39,3\n3,36,3\n");
    let out = dir.path().join("grid.csv");
    let out = out.to_str().unwrap();
    stdout(&tapevar(&["density", "--input", &tape, "--points", "256", "-o", out]));
    let grid = fs::read_to_string(out).unwrap();
    assert_eq!(grid.lines().count(), 257);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(format!("{out}.diag.json")).unwrap()).unwrap();
    assert!((diag["integral_of_density"].as_f64().unwrap() - 1.0).abs() < 1e-4);
    let mut last = 0.0;
    for row in grid.lines().skip(1) {
        let cdf: f64 = field(row, 2).parse().unwrap();
        assert!(cdf >= last - 1e-12);
        last = cdf;
    }
}

#[test]
fn moments_distribution_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "v.csv", "t,value,volume\n0,2,1\n1,4,2\n2,9,3\n3,5,1\n");
    let out = stdout(&tapevar(&["moments", "--input", &tape, "--distribution", "price", "--format", "csv"]));
    let atoms: Vec<(f64, f64)> = out
        .lines()
        .skip(1)
        .map(|r| (field(r, 0).parse().unwrap(), field(r, 1).parse().unwrap()))
        .collect();
    let levels = atoms.iter().flat_map(|&(p, c)| std::iter::repeat_n(p, c as usize));
    let again = FrequencyDistribution::from_levels(levels).unwrap();
    assert_eq!(again.to_csv(), out);
}

#[test]
fn sweep_orders_centers_and_skips_empty() {
    let dir = tempfile::tempdir().unwrap();
    let tape = write(dir.path(), "s.csv", "t,value,volume\n0,10,1\n1,22,2\n2,30,3\n10,11,1\n11,24,2\n");
    let out = stdout(&tapevar(&[
        "sweep", "--input", &tape, "--start", "1", "--end", "10", "--stride", "3", "--delta", "2", "--eps", "0.05",
    ]));
    let centers: Vec<&str> = out.lines().skip(1).map(|r| field(r, 0)).collect();
    assert!(centers.iter().all(|&c| c == "1" || c == "10"), "{out}");
    assert!(centers.first() == Some(&"1") && centers.last() == Some(&"10"));
}
