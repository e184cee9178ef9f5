use std::process::{Command, Output};

use serde_json::Value;
use shortcode_cli::{run, ExperimentConfig, Format, EXIT_BUDGET, EXIT_MALFORMED, EXIT_PRECONDITION, EXIT_UNKNOWN_COMMAND};

fn shortcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shortcode"))
        .args(args)
        .env_remove("SHORTCODE_SEED")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn temp_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("shortcode-{}-{name}", std::process::id()))
}

#[test]
fn code_info_reports_dual_parameters() {
    let r = json(&shortcode(&["code", "info", "--n", "5", "--d", "2"]));
    let res = &r["results"];
    assert_eq!(res["dim"], 16);
    assert_eq!(res["block_len"], 32);
    assert_eq!(res["dual"], "RM(5,2)");
    assert_eq!(res["min_weight"], 8);
    assert_eq!(r["config"]["command"], "code info");
    assert!(r["tool_version"].is_string());
}

#[test]
fn exit_codes() {
    assert_eq!(shortcode(&["frobnicate"]).status.code(), Some(EXIT_UNKNOWN_COMMAND));
    assert_eq!(shortcode(&["ug"]).status.code(), Some(EXIT_UNKNOWN_COMMAND));
    assert_eq!(
        shortcode(&["code", "info", "--n", "five", "--d", "2"]).status.code(),
        Some(EXIT_MALFORMED)
    );
    assert_eq!(
        shortcode(&["code", "info", "--n", "4", "--d", "4"]).status.code(),
        Some(EXIT_PRECONDITION)
    );
    assert_eq!(
        shortcode(&["ug", "gen", "--n", "3", "--d", "1", "--mode", "materialize", "--budget", "10"])
            .status
            .code(),
        Some(EXIT_BUDGET)
    );
    assert_eq!(
        shortcode(&["run", "--config", "/nonexistent/config.json"]).status.code(),
        Some(EXIT_MALFORMED)
    );
}

#[test]
fn config_file_matches_direct_invocation() {
    let path = temp_path("config.json");
    std::fs::write(
        &path,
        r#"{"command": "dict test", "params": {"fn": "random:3", "samples": 8000}, "seed": 5}"#,
    )
    .unwrap();
    let via_config = json(&shortcode(&["run", "--config", path.to_str().unwrap()]));
    let direct = json(&shortcode(&["dict", "test", "--fn", "random:3", "--samples", "8000", "--seed", "5"]));
    assert_eq!(via_config["results"], direct["results"]);
    assert_eq!(via_config["config"], direct["config"]);
    // Defaults are filled in on the way through.
    assert_eq!(via_config["config"]["params"]["eps"], 0.1);

    std::fs::write(&path, r#"{"command": "dict test", "params": {"bogus": 1}}"#).unwrap();
    assert_eq!(
        shortcode(&["run", "--config", path.to_str().unwrap()]).status.code(),
        Some(EXIT_MALFORMED)
    );
    std::fs::write(&path, r#"{"command": "dict test", "extra": true}"#).unwrap();
    assert_eq!(
        shortcode(&["run", "--config", path.to_str().unwrap()]).status.code(),
        Some(EXIT_MALFORMED)
    );
    std::fs::remove_file(&path).ok();
}

#[test]
fn seed_changes_sampled_results() {
    let a = json(&shortcode(&["ug", "eval", "--n", "3", "--d", "1", "--labeling", "hash:1", "--samples", "5000", "--seed", "1"]));
    let b = json(&shortcode(&["ug", "eval", "--n", "3", "--d", "1", "--labeling", "hash:1", "--samples", "5000", "--seed", "2"]));
    assert_ne!(a["results"]["value"]["value"], b["results"]["value"]["value"]);
}

#[test]
fn csv_projects_rows() {
    let out = shortcode(&["tester", "curve", "--n", "5", "--d", "2", "--kmax", "2", "--format", "csv"]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert!(header.contains(&"s_lower".to_string()));
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let k_col = header.iter().position(|h| h == "k").unwrap();
    assert_eq!(&rows[2][k_col], "2");
}

#[test]
fn out_flag_writes_file() {
    let path = temp_path("gamma.json");
    let out = shortcode(&["invariance", "gamma", "--rho", "0", "--mu", "0.5", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert!((v["results"]["gamma"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    std::fs::remove_file(&path).ok();
}

#[test]
fn materialized_instance_round_trips_through_file() {
    let path = temp_path("inst.txt");
    let out = shortcode(&[
        "ug", "gen", "--n", "3", "--d", "1", "--mode", "materialize", "--instance-out", path.to_str().unwrap(),
    ]);
    let v = json(&out);
    assert_eq!(v["results"]["constraints"], 1792);
    let inst = shortcode::uggap::MaterializedInstance::read(std::io::BufReader::new(std::fs::File::open(&path).unwrap()))
        .unwrap();
    assert_eq!(inst.constraints.len(), 1792);
    assert_eq!(inst.total_weight(), num_rational::BigRational::from_integer(1.into()));
    std::fs::remove_file(&path).ok();
}

#[test]
fn in_process_run_validates_nested_run() {
    let cfg = ExperimentConfig {
        command: "run".into(),
        params: serde_json::Map::from_iter([("config".to_string(), Value::from("x.json"))]),
        seed: 0,
        out: "-".into(),
        format: Format::Json,
    };
    assert_eq!(run(&cfg).unwrap_err().code, EXIT_UNKNOWN_COMMAND);
}

#[test]
fn psi_eval_rejects_out_of_range_dictator() {
    let out = shortcode(&["psi", "eval", "--labeling", "dictators:99", "--samples", "10"]);
    assert_eq!(out.status.code(), Some(EXIT_PRECONDITION));
}
