use std::path::PathBuf;
use std::process::{Command, Output};

fn bbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("bbp-cli-{}-{name}", std::process::id()))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn detect_prints_partition() {
    let o = bbp(&["detect", "--target", "x1 * x2 + sin(x3)", "--dim", "3", "--domain", "-3,3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("{x1} * {x2} | {x3}"), "{out}");
    assert!(out.contains("\"blocks\""));
}

#[test]
fn fit_writes_json_result() {
    let path = scratch("fit.json");
    let o = bbp(&[
        "fit", "--target", "1.2 + 10 * sin(2 * x1 - x3) - 3 * x2^2", "--dim", "3", "--domain", "-3,3",
        "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(json["model"]["validation_mse"].as_f64().unwrap() <= 1e-6);
    assert!(stdout(&o).contains("validation mse"));
    let _ = std::fs::remove_file(path);
}

#[test]
fn same_seed_same_model() {
    let run = || {
        let o = bbp(&["fit", "--target", "exp(x1) * cos(x2)", "--domain", "-2,2", "--seed", "9"]);
        assert_eq!(o.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["expression"].as_str().unwrap().to_string()
    };
    assert_eq!(run(), run());
}

#[test]
fn invalid_input_exits_with_3() {
    assert_eq!(bbp(&["fit", "--target", "x1 +", "--dim", "1", "--domain", "0,1"]).status.code(), Some(3));
    assert_eq!(bbp(&["detect", "--target", "x1", "--domain", "1,0"]).status.code(), Some(3));
    assert_eq!(bbp(&["bench", "--cases", "12"]).status.code(), Some(3));
    assert_eq!(bbp(&["bench", "--cases", "2", "--format", "xml"]).status.code(), Some(3));
    assert_eq!(bbp(&["fit", "--bogus"]).status.code(), Some(3));
    assert_eq!(bbp(&["fit", "--target", "x1", "--domain", "0,1", "--engine", "neural"]).status.code(), Some(3));
}

#[test]
fn below_tolerance_exits_with_2() {
    // No library template matches this one-variable shape.
    let o = bbp(&["fit", "--target", "exp(sin(3 * x1))", "--domain", "-3,3", "--eps", "1e-12"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let path = scratch("config.json");
    std::fs::write(&path, r#"{"cases": "2", "format": "json", "seed": 5}"#).unwrap();
    let o = bbp(&["bench", "--config", path.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "case,dim,domain,samples,structure_match,mse,t1,t2,t3,t,ratio,eta");
    assert!(lines.next().unwrap().starts_with("2,3,"));

    std::fs::write(&path, r#"{"cases": "2", "colour": "blue"}"#).unwrap();
    let o = bbp(&["bench", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let _ = std::fs::remove_file(path);
}

#[test]
fn bench_table_has_ratio_column() {
    let o = bbp(&["bench", "--cases", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("T_d/T_BBP"));
}
