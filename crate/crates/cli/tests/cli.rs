use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sigdecay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigdecay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_uniform(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = sigdecay(&["synth", "--scenario", "uniform", "--seed", "7", "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_writes_inputs_and_truth() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    for f in ["beneficiaries.csv", "hospitalizations.csv", "covariates.csv", "truth.toml"] {
        assert!(data.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn synth_same_seed_same_bytes() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(
        read_dir_sorted(&synth_uniform(a.path())),
        read_dir_sorted(&synth_uniform(b.path()))
    );
}

#[test]
fn unknown_scenario_lists_known_ones() {
    let tmp = TempDir::new().unwrap();
    let out = sigdecay(&["synth", "--scenario", "nope", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["uniform", "planted-divergence", "regression-recovery"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_flag_value_is_input_error() {
    let out = sigdecay(&["mine", "--granularity", "code99"]);
    assert_eq!(code(&out), 2);
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    let out = sigdecay(&["mine", "--data", s(&data), "--alpha", "1.5", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn mine_dimensions_follow_granularity() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    for (g, k) in [("category5", 5), ("code17", 17)] {
        let out_dir = tmp.path().join(g);
        let out = sigdecay(&[
            "mine", "--data", s(&data), "--granularity", g, "--level", "national", "--out", s(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(out_dir.join("matrices.csv")).unwrap();
        let rows = text.lines().count() - 1;
        assert_eq!(rows, 4 * k * k, "{g}");
    }
}

#[test]
fn pipeline_end_to_end_and_rerun_identical() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    let run = |name: &str| {
        let out_dir = tmp.path().join(name);
        let out = sigdecay(&[
            "pipeline", "--data", s(&data), "--level", "state", "--skewers", "500", "--out", s(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let first = run("a");
    for f in [
        "manifest.toml",
        "cohort_summary.csv",
        "code_frequencies.csv",
        "category_shares.csv",
        "matrices.csv",
        "scores.csv",
        "coefficients.csv",
        "regression.txt",
    ] {
        assert!(first.join(f).is_file(), "{f} missing");
    }
    let manifest = fs::read_to_string(first.join("manifest.toml")).unwrap();
    assert_eq!(manifest.matches("[[stages]]").count(), 5, "{manifest}");
    assert!(!manifest.contains("failed"));

    let second = run("b");
    let strip = |files: Vec<(String, Vec<u8>)>| {
        files
            .into_iter()
            .map(|(n, b)| {
                // the manifest echoes its own output directory
                let text = String::from_utf8(b).unwrap();
                (n, text.replace(s(&first), "OUT").replace(s(&second), "OUT"))
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(read_dir_sorted(&first)), strip(read_dir_sorted(&second)));
}

#[test]
fn missing_covariates_fails_at_regress_keeping_earlier_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    fs::remove_file(data.join("covariates.csv")).unwrap();
    let out_dir = tmp.path().join("out");
    let out = sigdecay(&["pipeline", "--data", s(&data), "--skewers", "200", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(out_dir.join("scores.csv").is_file());
    assert!(out_dir.join("matrices.csv").is_file());
    let manifest = fs::read_to_string(out_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("name = \"regress\"\nstatus = \"failed\""), "{manifest}");
}

#[test]
fn duplicate_covariate_fips_is_input_error() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    let path = data.join("covariates.csv");
    let text = fs::read_to_string(&path).unwrap();
    let first_row = text.lines().nth(1).unwrap().to_string();
    fs::write(&path, format!("{text}{first_row}\n")).unwrap();
    let out = sigdecay(&["regress", "--data", s(&data), "--skewers", "200", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn too_few_counties_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    // keep two counties: far fewer observations than predictors
    let path = data.join("covariates.csv");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(3).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let out = sigdecay(&["regress", "--data", s(&data), "--skewers", "200", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("observation"), "{err}");
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let data = synth_uniform(tmp.path());
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "beneficiaries = \"data/beneficiaries.csv\"\nhospitalizations = \"data/hospitalizations.csv\"\n\
         level = \"state\"\nmethod = \"1-mad\"\nout = \"cfg_out\"\n",
    )
    .unwrap();
    let out = sigdecay(&["similarity", "--config", s(&cfg), "--level", "county"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let scores = fs::read_to_string(tmp.path().join("cfg_out/scores.csv")).unwrap();
    assert_eq!(scores.lines().nth(1).unwrap().split(',').nth(1), Some("county"), "{scores}");
    assert!(scores.contains("OneMinusMAD"), "{scores}");
    assert!(data.is_dir());
}
