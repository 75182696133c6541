use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn pcurve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcurve")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let w = |name: &str, text: &str| std::fs::write(dir.path().join(name), text).unwrap();
    w("two.csv", "0,0\n1,0\n");
    w("segment.json", r#"{"dim": 2, "vertices": [[0.2, 0.0], [0.8, 0.0]]}"#);
    w("eight.json", r#"{"dim": 2, "vertices": [[0, 0], [1, 1], [1, 0], [0, 1]]}"#);
    w("empty.json", "");
    w("space.json", r#"{"dim": 3, "atoms": [{"x": [0, 0, 0]}, {"x": [1, 0, 0]}, {"x": [0, 1, 1], "m": 2}]}"#);
    w("space_curve.json", r#"{"dim": 3, "vertices": [[0, 0, 0], [0.5, 0.5, 0.5]]}"#);
    w("square.csv", "0,0\n1,0\n1,1\n0,1\n");
    dir
}

fn check_status(report: &Value, name: &str) -> String {
    report["report"]["theory"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))["status"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn fit_two_atoms_writes_the_closed_form_segment() {
    let dir = setup();
    let o =
        pcurve(dir.path(), &["fit", "two.csv", "--p", "2", "--lambda", "0.2", "--out-dir", "out", "--svg", "--plan"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = read_json(dir.path().join("out/curve.json"));
    let v = curve["vertices"].as_array().unwrap();
    assert_eq!(v.len(), 2);
    let (a, b) = (v[0][0].as_f64().unwrap(), v[1][0].as_f64().unwrap());
    let (a, b) = (a.min(b), a.max(b));
    assert!((a - 0.2).abs() < 1e-6 && (b - 0.8).abs() < 1e-6, "{curve}");
    assert_eq!(curve["manifest"]["command"], "fit");
    let report = read_json(dir.path().join("out/report.json"));
    assert!((report["report"]["energy"]["total"].as_f64().unwrap() - 0.16).abs() < 1e-9);
    assert_eq!(report["report"]["theory"]["pass"], true);
    let result = read_json(dir.path().join("out/result.json"));
    assert!(result["result"]["energy_trace"].as_array().unwrap().len() >= 2);
    assert!(dir.path().join("out/plot.svg").exists());
    let plan = read_json(dir.path().join("out/plan.json"));
    assert_eq!(plan["plan"]["plan"]["entries"].as_array().unwrap().len(), 2);

    // The fitted curve file is itself a valid curve input.
    let o = pcurve(dir.path(), &["check", "two.csv", "out/curve.json", "--p", "2", "--lambda", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn fit_reruns_are_byte_identical() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = pcurve(
            dir.path(),
            &[
                "fit",
                "square.csv",
                "--p",
                "1.5",
                "--lambda",
                "0.05",
                "--seed",
                "1",
                "--restarts",
                "3",
                "--out-dir",
                out,
                "--svg",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["curve.json", "result.json", "report.json", "plot.svg"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between reruns");
    }
    // Thread count is not part of the result.
    let o = pcurve(
        dir.path(),
        &[
            "fit",
            "square.csv",
            "--p",
            "1.5",
            "--lambda",
            "0.05",
            "--seed",
            "1",
            "--restarts",
            "3",
            "--out-dir",
            "c",
            "--threads",
            "1",
        ],
    );
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a/result.json")).unwrap(),
        std::fs::read(dir.path().join("c/result.json")).unwrap()
    );
}

#[test]
fn fit_rejects_bad_input_with_exit_2() {
    let dir = setup();
    let o = pcurve(dir.path(), &["fit", "two.csv", "--p", "0.5", "--lambda", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p must be ≥ 1"), "{}", stderr(&o));
    let o = pcurve(dir.path(), &["fit", "missing.csv", "--p", "2", "--lambda", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pcurve(dir.path(), &["fit", "two.csv", "--p", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pcurve(dir.path(), &["fit", "two.csv", "--p", "2", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.csv"), "0,0\n1\n").unwrap();
    let o = pcurve(dir.path(), &["fit", "bad.csv", "--p", "2", "--lambda", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn fit_reads_config_files() {
    let dir = setup();
    std::fs::write(dir.path().join("cfg.json"), r#"{"m_max": 3, "restarts": 1, "p": 9.0}"#).unwrap();
    let o = pcurve(
        dir.path(),
        &["fit", "square.csv", "--p", "2", "--lambda", "0.05", "--config", "cfg.json", "--out-dir", "o"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let result = read_json(dir.path().join("o/result.json"));
    assert_eq!(result["manifest"]["config"]["p"], 2.0);
    assert_eq!(result["manifest"]["config"]["m_max"], 3);
    assert_eq!(result["manifest"]["inputs"].as_array().unwrap().len(), 2);
    assert!(result["result"]["curve"]["vertices"].as_array().unwrap().len() <= 3);
    std::fs::write(dir.path().join("broken.json"), r#"{"m_max": "x"}"#).unwrap();
    let o = pcurve(dir.path(), &["fit", "square.csv", "--p", "2", "--lambda", "0.05", "--config", "broken.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_reports_without_failing_the_process() {
    let dir = setup();
    let o = pcurve(dir.path(), &["check", "two.csv", "segment.json", "--p", "2", "--lambda", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["report"]["theory"]["pass"], true);
    assert!((r["report"]["energy"]["total"].as_f64().unwrap() - 0.16).abs() < 1e-12);

    let o = pcurve(dir.path(), &["check", "two.csv", "eight.json", "--p", "2", "--lambda", "0.2"]);
    assert!(o.status.success());
    let r = json(&o);
    assert_eq!(check_status(&r, "injectivity"), "FAIL");

    let o = pcurve(dir.path(), &["check", "space.json", "space_curve.json", "--p", "2", "--lambda", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    for name in ["hull_containment", "turn_direction", "injectivity"] {
        assert_eq!(check_status(&r, name), "SKIPPED", "{name}");
    }
    for name in ["length_bound", "tv_global", "tv_local"] {
        assert_ne!(check_status(&r, name), "SKIPPED", "{name}");
    }

    let o = pcurve(dir.path(), &["check", "space.json", "segment.json", "--p", "2", "--lambda", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_results_certification_and_refusal() {
    let dir = setup();
    let o = pcurve(
        dir.path(),
        &["oracle", "two.csv", "--p", "2", "--lambda", "0.2", "--m", "2", "--h", "0.005", "--curve", "segment.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    let e = r["oracle"]["result"]["energy"].as_f64().unwrap();
    assert!((e - 0.16).abs() < 1e-9, "{e}");
    assert_eq!(r["oracle"]["certification"]["status"], "PASS");

    let o = pcurve(
        dir.path(),
        &["oracle", "square.csv", "--p", "2", "--lambda", "0.2", "--m", "4", "--h", "0.001", "--budget", "1000"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("budget is 1000"), "{}", stderr(&o));

    let o = pcurve(dir.path(), &["oracle", "space.json", "--p", "2", "--lambda", "0.2", "--m", "2", "--h", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_layers_and_errors() {
    let dir = setup();
    let o = pcurve(dir.path(), &["plot", "square.csv", "--out", "m.svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("m.svg")).unwrap();
    assert!(svg.contains("<polygon") && !svg.contains("<polyline"));
    assert!(svg.contains("<metadata>"));

    let o = pcurve(dir.path(), &["plot", "two.csv", "--curve", "segment.json", "--out", "c.svg"]);
    assert!(o.status.success());
    let svg = std::fs::read_to_string(dir.path().join("c.svg")).unwrap();
    assert!(svg.contains(r#"<polyline points="0.2,0 0.8,0""#));

    let o = pcurve(dir.path(), &["plot", "two.csv", "--curve", "empty.json", "--out", "e.svg"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pcurve(dir.path(), &["plot", "space.json", "--out", "s.svg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn conjecture_needs_p_below_two() {
    let dir = setup();
    let o = pcurve(dir.path(), &["conjecture", "--p", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("below 2"));
    let o = pcurve(dir.path(), &["conjecture", "--p", "0.9"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pcurve(dir.path(), &["conjecture", "--p", "1.5", "--budget", "2", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["search"]["instances"], 2);
    assert_eq!(r["manifest"]["seed"], 3);
}

#[test]
fn synth_output_feeds_fit() {
    let dir = setup();
    let o =
        pcurve(dir.path(), &["synth", "--family", "noisy_circle", "--n", "40", "--seed", "2", "--out", "circle.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o =
        pcurve(dir.path(), &["synth", "--family", "noisy_circle", "--n", "40", "--seed", "2", "--out", "circle.json"]);
    assert!(o.status.success());
    for input in ["circle.csv", "circle.json"] {
        let o =
            pcurve(dir.path(), &["fit", input, "--p", "2", "--lambda", "0.05", "--out-dir", &format!("fit-{input}")]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = read_json(dir.path().join("fit-circle.csv/result.json"));
    let b = read_json(dir.path().join("fit-circle.json/result.json"));
    assert_eq!(a["result"], b["result"]);
    let o = pcurve(dir.path(), &["synth", "--family", "spiral", "--n", "4", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
