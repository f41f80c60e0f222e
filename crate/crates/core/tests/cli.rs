use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn irrfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irrfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/audit.csv")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn audit_json_report() {
    let out = irrfair(&["audit", "--input", fixture().to_str().unwrap(), "--group-column", "group", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["input"]["individuals"], 12);
    assert_eq!(v["input"]["incomplete"], 0);
    assert_eq!(v["statistic"], "kappa");
    let groups = v["groups"]["groups"].as_object().unwrap();
    assert_eq!(groups.keys().collect::<Vec<_>>(), ["east", "north", "south"]);
    assert_eq!(v["groups"]["excluded"], 1);
    let f = &v["overall"]["fairness"];
    assert_eq!(f["total_violations"], f["disagreeing_pairs"]);
    for rec in f["violations"].as_array().unwrap() {
        assert_eq!(rec["individual_a"], rec["individual_b"]);
        assert_eq!(rec["d_value"], 0.0);
        assert_eq!(rec["D_value"], 1.0);
    }
}

#[test]
fn audit_text_to_file_and_violation_cap() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.txt");
    let out = irrfair(&[
        "audit",
        "--input",
        fixture().to_str().unwrap(),
        "--max-violations",
        "2",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(report).unwrap();
    assert!(text.contains("mean kappa:"));
    assert!(text.contains("more"), "{text}");
}

#[test]
fn continuous_audit_with_icc() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "scores.csv", "individual,a,b\n1,9,8\n2,6,7\n3,8,8\n4,3,5\n");
    let out = irrfair(&["audit", "--input", &input, "--kind", "continuous", "--range", "0,10", "--statistic", "icc-a1", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let icc = v["overall"]["statistic"].as_f64().unwrap();
    assert!((icc - 44.0 / 53.0).abs() < 1e-12);
    assert_eq!(v["overall"]["fairness"]["total_violations"], 3);
}

#[test]
fn long_layout() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "long.csv", "individual,rater,prediction\n1,a,yes\n1,b,no\n2,a,no\n2,b,no\n");
    let out = irrfair(&["audit", "--input", &input, "--long", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["input"]["kind"], "categorical");
    assert_eq!(v["overall"]["fairness"]["total_violations"], 1);
}

#[test]
fn data_errors_exit_1_with_class() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("individual,a,b\n1,0,1\n1,1,1\n", "DuplicateIndividual"),
        ("individual,a,b\n1,0,1\n2,1,1,0\n", "ParseError"),
        ("name,a,b\n1,0,1\n", "HeaderMismatch"),
    ];
    for (i, (text, class)) in cases.iter().enumerate() {
        let input = write(&dir, &format!("bad{i}.csv"), text);
        let out = irrfair(&["audit", "--input", &input]);
        assert_eq!(out.status.code(), Some(1), "{class}: {}", stderr(&out));
        assert!(stderr(&out).contains(&format!("error[{class}]")), "{}", stderr(&out));
    }
}

#[test]
fn config_errors_exit_2_with_class() {
    let input = fixture();
    let input = input.to_str().unwrap();
    let out = irrfair(&["audit", "--input", input, "--kind", "continuous"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[MissingRange]"));

    let out = irrfair(&["audit", "--input", input, "--statistic", "icc1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[IncompatibleStatistic]"));

    let out = irrfair(&["audit", "--input", input, "--mode", "sideways"]);
    assert_eq!(out.status.code(), Some(2));

    let out = irrfair(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn synth_is_reproducible_and_auditable() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "scenario.toml",
        "individuals = 60\nraters = 3\nseed = 5\nnoise_spread = 0.2\ngroup_labels = [\"a\", \"b\"]\ngroup_proportions = [0.5, 0.5]\ngroup_noise = [1.0, 3.0]\n",
    );
    let csv1 = dir.path().join("one.csv");
    let csv2 = dir.path().join("two.csv");
    let sidecar = dir.path().join("truth.json");
    for csv in [&csv1, &csv2] {
        let out = irrfair(&[
            "synth",
            "--config",
            &config,
            "--output",
            csv.to_str().unwrap(),
            "--sidecar",
            sidecar.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = fs::read(&csv1).unwrap();
    assert_eq!(a, fs::read(&csv2).unwrap());
    assert!(String::from_utf8(a).unwrap().starts_with("individual,r1,r2,r3,group\ni01,"));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(truth["true_scores"].as_object().unwrap().len(), 60);

    let out = irrfair(&["audit", "--input", csv1.to_str().unwrap(), "--group-column", "group", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = irrfair(&["synth", "--config", &config, "--raters", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[InvalidScenario]"));

    let bad = write(&dir, "bad.toml", "individuals = 10\ncolour = \"red\"\n");
    let out = irrfair(&["synth", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_json() {
    let out = irrfair(&[
        "sweep",
        "--individuals",
        "100",
        "--noise-levels",
        "0,0.3",
        "--replicates",
        "4",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["pair_violation_rate_mean"], 0.0);
    assert_eq!(points[0]["statistic_mean"], 1.0);
    assert!(points[1]["pair_violation_rate_mean"].as_f64().unwrap() > 0.0);
}
