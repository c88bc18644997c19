use std::path::PathBuf;
use std::process::{Command, Output};

fn models(name: &str) -> String {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name);
    dir.to_str().unwrap().to_owned()
}

fn wrmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrmc")).args(args).output().expect("wrmc runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn counterexample_args<'a>(model: &'a str, f: &'a str) -> Vec<&'a str> {
    vec!["--model", model, "--f", f]
}

#[test]
fn help_lists_subcommands_and_flags() {
    let top = wrmc(&["--help"]);
    assert!(top.status.success());
    let text = stdout(&top);
    for sub in ["exact", "simulate", "bench", "counterexample", "validate"] {
        assert!(text.contains(sub), "missing {sub} in --help");
    }
    let bench = stdout(&wrmc(&["bench", "--help"]));
    for flag in ["--n-list", "--reps", "--seed", "--level", "--init", "--estimators", "--max-steps", "--format"] {
        assert!(bench.contains(flag), "missing {flag} in bench --help");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = wrmc(&["exact", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_broken_model() {
    assert_eq!(wrmc(&["validate", "--model", &models("counterexample.json")]).status.code(), Some(0));
    let out = wrmc(&["validate", "--model", &models("broken.json")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exact_json_matches_known_values() {
    let (m, f) = (models("counterexample.json"), models("counterexample_f.json"));
    let mut args = vec!["exact", "--format", "json"];
    args.extend(counterexample_args(&m, &f));
    let out = wrmc(&args);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["sigma2"].as_f64().unwrap() - 437.0 / 6000.0).abs() < 1e-12);
    assert!((v["b_star"].as_f64().unwrap() - 22890.0 / 32273.0).abs() < 1e-12);
}

#[test]
fn constant_function_has_zero_variance_and_no_b_star() {
    let (m, f) = (models("counterexample.json"), models("const_f.json"));
    let out = wrmc(&["exact", "--format", "json", "--model", &m, "--f", &f]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["sigma2"].as_f64(), Some(0.0));
    assert!(v["b_star"].is_null());
}

#[test]
fn missing_label_is_rejected() {
    let f = std::env::temp_dir().join("wrmc_partial_f.json");
    std::fs::write(&f, r#"{"a": 1, "b": 2}"#).unwrap();
    let out = wrmc(&["exact", "--model", &models("counterexample.json"), "--f", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('c'));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (m, f) = (models("counterexample.json"), models("counterexample_f.json"));
    let mut sim = vec!["simulate", "--n", "500", "--seed", "11", "--format", "json"];
    sim.extend(counterexample_args(&m, &f));
    assert_eq!(wrmc(&sim).stdout, wrmc(&sim).stdout);
    let mut bench = vec!["bench", "--n-list", "1,10", "--reps", "200", "--seed", "5", "--format", "csv"];
    bench.extend(counterexample_args(&m, &f));
    assert_eq!(wrmc(&bench).stdout, wrmc(&bench).stdout);
}

#[test]
fn simulate_json_has_all_estimators() {
    let (m, f) = (models("pair_boltzmann.json"), models("pair_f.json"));
    let mut args = vec!["simulate", "--n", "200", "--alternate", "metropolis", "--format", "json"];
    args.extend(counterexample_args(&m, &f));
    let out = wrmc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["i_n", "j_n", "i_n_cv", "b_hat", "i_n_adaptive", "i_n_ppsi", "j_prime_n"] {
        assert!(v[key].is_number(), "{key} missing");
    }
    assert_eq!(v["n"].as_u64(), Some(200));
}

#[test]
fn simulate_writes_trace() {
    let (m, f) = (models("counterexample.json"), models("counterexample_f.json"));
    let path = std::env::temp_dir().join("wrmc_trace.tsv");
    let mut args = vec!["simulate", "--n", "20", "--trace", path.to_str().unwrap()];
    args.extend(counterexample_args(&m, &f));
    assert!(wrmc(&args).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# step\tstate\tproposal\toutcome"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn bench_csv_header_and_rows() {
    let (m, f) = (models("counterexample.json"), models("counterexample_f.json"));
    let mut args = vec!["bench", "--n-list", "1,10", "--reps", "100", "--format", "csv"];
    args.extend(counterexample_args(&m, &f));
    let text = stdout(&wrmc(&args));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,est,var_lo,var_hi,diff_lo,diff_hi,reps,level,seed"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn step_budget_guard() {
    let (m, f) = (models("counterexample.json"), models("counterexample_f.json"));
    let mut args = vec!["bench", "--n-list", "1,10", "--reps", "100"];
    args.extend(counterexample_args(&m, &f));
    let out = Command::new(env!("CARGO_BIN_EXE_wrmc"))
        .args(&args)
        .env("WRMC_MAX_STEPS", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn counterexample_prints_key_values() {
    let text = stdout(&wrmc(&["counterexample"]));
    let diff: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("sigma2_cv(f,f)-sigma2="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((diff - 0.010115).abs() < 1e-12);
}
