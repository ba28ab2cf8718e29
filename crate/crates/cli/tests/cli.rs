//! End-to-end runs of the `mme` binary: exit codes, the artifact
//! protocol, envelope schema conformance and bit-level reproducibility.

use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mme"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).expect("scratch dir reset");
    }
    dir
}

fn run(args: &[&str], out_dir: &Path) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(out_dir)
        .output()
        .expect("binary spawns")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = bin().output().expect("binary spawns");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "expected usage text, got: {err}");
}

#[test]
fn renewal_hand_oracle_matches_and_envelope_follows_the_schema() {
    let dir = scratch("renewal12");
    let out = run(&["renewal", "--r", "1,2", "--report"], &dir);
    assert_success(&out);
    let report = read_json(&dir.join("report.json"));
    let data = &report["data"];
    assert!((data["lambda"].as_f64().unwrap() - 2.0).abs() <= 1e-12);
    assert!((data["mean_return_time"].as_f64().unwrap() - 1.5).abs() <= 1e-12);
    let w = data["w"].as_array().unwrap();
    assert!((w[0].as_f64().unwrap() - 2.0 / 3.0).abs() <= 1e-12);
    assert!((w[1].as_f64().unwrap() - 1.0 / 3.0).abs() <= 1e-12);
    let p = data["p"].as_array().unwrap();
    assert!((p[0].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    assert!((p[1].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    let entropy = &data["entropy"];
    let log_lambda = entropy["log_lambda"].as_f64().unwrap();
    assert!((log_lambda - std::f64::consts::LN_2).abs() <= 1e-12);
    assert!((entropy["markov_sum"].as_f64().unwrap() - log_lambda).abs() <= 1e-12);
    // --report echoes the JSON to stdout
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"lambda\""), "stdout: {stdout}");

    // the envelope satisfies the shipped schema's requirements
    let schema = read_json(&repo_root().join("schemas/v1/envelope.schema.json"));
    for key in schema["required"].as_array().unwrap() {
        let key = key.as_str().unwrap();
        assert!(report.get(key).is_some(), "envelope missing {key}");
    }
    let allowed = schema["properties"]["subcommand"]["enum"].as_array().unwrap();
    assert!(allowed.contains(&report["subcommand"]));
    assert_eq!(report["tool"], "mme");
    assert_eq!(report["schema"], "v1");

    // the same spec through the document grammar gives the same measure
    let dir2 = scratch("renewal12-file");
    let spec_path = repo_root().join("specs/r12.renewal");
    let out2 = run(
        &["renewal", "--spec", spec_path.to_str().unwrap()],
        &dir2,
    );
    assert_success(&out2);
    let report2 = read_json(&dir2.join("report.json"));
    assert_eq!(report2["data"]["lambda"], data["lambda"]);
    assert_eq!(report2["data"]["w"], data["w"]);
}

#[test]
fn artifacts_are_bit_identical_across_reruns_and_thread_counts() {
    let args = [
        "sparse", "--phi0", "0.9", "--n0", "12", "--points", "80", "--orbit-len", "60",
        "--seed", "5",
    ];
    let d1 = scratch("det-threads-1");
    let d2 = scratch("det-threads-4");
    let d3 = scratch("det-rerun");
    let mut with_one: Vec<&str> = args.to_vec();
    with_one.extend(["--threads", "1"]);
    let mut with_four: Vec<&str> = args.to_vec();
    with_four.extend(["--threads", "4"]);
    assert_success(&run(&with_one, &d1));
    assert_success(&run(&with_four, &d2));
    assert_success(&run(&args, &d3));
    let r1 = fs::read(d1.join("report.json")).unwrap();
    let r2 = fs::read(d2.join("report.json")).unwrap();
    let r3 = fs::read(d3.join("report.json")).unwrap();
    assert!(r1 == r2, "thread count changed the report bytes");
    assert!(r1 == r3, "rerun changed the report bytes");

    // manifests record the digest and satisfy the shipped manifest schema
    let m1 = read_json(&d1.join("manifest.json"));
    let m2 = read_json(&d2.join("manifest.json"));
    let schema = read_json(&repo_root().join("schemas/v1/manifest.schema.json"));
    for key in schema["required"].as_array().unwrap() {
        let key = key.as_str().unwrap();
        assert!(m1.get(key).is_some(), "manifest missing {key}");
    }
    let digest = |m: &Value| {
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .find(|o| o["name"] == "report.json")
            .expect("report.json listed")["sha256"]
            .clone()
    };
    assert_eq!(digest(&m1), digest(&m2));
}

#[test]
fn overlapping_table_fails_validation_with_exit_2() {
    let dir = scratch("badtable");
    fs::create_dir_all(&dir).unwrap();
    let tbl = dir.join("bad.tbl");
    fs::write(&tbl, "disk 0 0 0.4\ndisk 0.1 0 0.4\n").unwrap();
    let out = bin()
        .args(["table-check", "--table", tbl.to_str().unwrap()])
        .arg("--out")
        .arg(dir.join("artifacts"))
        .output()
        .expect("binary spawns");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("overlap"), "stderr: {err}");
}

#[test]
fn exhausted_refinement_budget_exits_3() {
    let dir = scratch("tiny-budget");
    let out = run(
        &["leaves", "--generations", "3", "--max-evals", "10"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("refinement budget"), "stderr: {err}");
}

#[test]
fn csv_artifacts_have_headers_and_no_partials_remain() {
    let dir = scratch("renewal-csv");
    let out = run(&["renewal", "--r", "1,2", "--format", "csv"], &dir);
    assert_success(&out);
    let csv = fs::read_to_string(dir.join("measure.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,w_n_mass,p_n_transition"));
    assert!(lines.next().unwrap().starts_with("1,"), "missing data rows");
    for entry in fs::read_dir(&dir).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy().into_owned();
        assert!(!name.ends_with(".partial"), "leftover partial {name}");
    }
    let manifest = read_json(&dir.join("manifest.json"));
    let names: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"report.json"));
    assert!(names.contains(&"measure.csv"));
}

#[test]
fn operator_counting_identities_agree_on_the_hand_spec() {
    let dir = scratch("operator12");
    let out = run(&["operator", "--r", "1,2", "--n-max", "12"], &dir);
    assert_success(&out);
    let data = read_json(&dir.join("report.json"))["data"].clone();
    assert_eq!(data["matrix_power_agrees"], true);
    let a_n = data["a_n"].as_array().unwrap();
    // a_n = (2^{n+1} + (-1)^n) / 3 for r = (1, 2)
    assert_eq!(a_n[12], "2731");
    assert_eq!(data["dichotomy"]["verdict"], "Bounded");
}

#[test]
fn correlate_null_spec_runs_and_emits_the_series() {
    let dir = scratch("correlate-null");
    let out = run(
        &[
            "correlate", "--r", "4", "--rule", "label-parity", "--steps", "20000",
            "--batches", "4", "--max-lag", "6", "--fit-lo", "2", "--fit-hi", "5",
            "--format", "csv",
        ],
        &dir,
    );
    assert_success(&out);
    let csv = fs::read_to_string(dir.join("correlations.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lag_steps,correlation,standard_error");
    assert_eq!(lines.len(), 7, "header plus one row per lag");
    let data = read_json(&dir.join("report.json"))["data"].clone();
    assert!(data["max_abs_z"].as_f64().unwrap().is_finite());
}

#[test]
fn tiers_reads_numbers_from_prior_reports() {
    let dir = scratch("tiers-from");
    fs::create_dir_all(&dir).unwrap();
    let fake = serde_json::json!({
        "tool": "mme",
        "schema": "v1",
        "subcommand": "entropy",
        "seed": 1,
        "versions": {"mme-core": "0", "mme-cli": "0"},
        "data": {"estimate": {"h_hat": 1.6}},
    });
    let entropy_path = dir.join("entropy_report.json");
    fs::write(&entropy_path, serde_json::to_vec_pretty(&fake).unwrap()).unwrap();
    let out = run(
        &[
            "tiers",
            "--from-entropy",
            entropy_path.to_str().unwrap(),
            "--s0-hat",
            "0.55",
        ],
        &dir,
    );
    assert_success(&out);
    let data = read_json(&dir.join("report.json"))["data"].clone();
    assert_eq!(data["h_hat"].as_f64().unwrap(), 1.6);
    let ratio = data["report"]["prediction"]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.6 / (0.55 * std::f64::consts::LN_2)).abs() <= 1e-12);
    assert_eq!(data["report"]["prediction"]["tier_asip"], true);

    // a non-entropy report is rejected as an h_hat source
    let out = run(
        &[
            "tiers",
            "--from-entropy",
            dir.join("report.json").to_str().unwrap(),
            "--s0-hat",
            "0.55",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn map_battery_passes_on_the_reference_table() {
    let dir = scratch("map-battery");
    let out = run(&["map-test", "--points", "300"], &dir);
    assert_success(&out);
    let data = read_json(&dir.join("report.json"))["data"].clone();
    assert_eq!(data["failures"].as_array().unwrap().len(), 0);
    assert!(data["reversibility_max"].as_f64().unwrap() <= 1e-9);
    assert!(data["cone_min_margin"].as_f64().unwrap() > 0.0);
}
