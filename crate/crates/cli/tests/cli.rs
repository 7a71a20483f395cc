use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const MAP: &str = "[map]\nell1 = 0.5\nell2 = 0.5\nk1 = 1.5\nk2 = 1.5\na1 = 1.0\na2 = 1.0\nb1 = 1.0\nb2 = 1.0\n";

fn dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write(d: &Path, file: &str, text: &str) -> PathBuf {
    let p = d.join(file);
    std::fs::write(&p, text).unwrap();
    p
}

fn twinmap(config: &Path, extra: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinmap")).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn classify_reference() {
    let d = dir("classify");
    let cfg = write(&d, "c.toml", MAP);
    let o = twinmap(&cfg, &["--experiment", "classify", "--seed", "9", "--workers", "1"], &d.join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/classify.json")).unwrap()).unwrap();
    assert_eq!(v["experiment"], "classify");
    assert_eq!(v["seed"], 9);
    assert_eq!(v["workers"], 1);
    let r = &v["results"]["regime"];
    assert_eq!(r["beta"], 0.75);
    assert_eq!(r["finite"], true);
    assert_eq!(r["mixing"], "polynomial");
    assert!((r["rate"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(v["results"]["model"]["n_plus"], 3);
    let csv = std::fs::read_to_string(d.join("out/classify_graph.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,g,g_prime"));
    assert_eq!(csv.lines().count(), 2001);
}

#[test]
fn json_config_matches_toml() {
    let d = dir("json");
    let json = r#"{"experiment": "classify", "map": {"ell1": 0.5, "ell2": 0.5, "k1": 1.5, "k2": 1.5, "a1": 1.0, "a2": 1.0, "b1": 1.0, "b2": 1.0}}"#;
    let cfg = write(&d, "c.json", json);
    let o = twinmap(&cfg, &[], &d.join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/classify.json")).unwrap()).unwrap();
    assert_eq!(v["results"]["regime"]["beta"], 0.75);
    assert_eq!(v["config"]["partition"]["n_max"], 100_000);
}

#[test]
fn validation_errors_exit_2() {
    let d = dir("validation");
    let cases = [
        ("missing_key.toml", MAP.replace("k1 = 1.5\n", ""), "k1"),
        ("unknown_key.toml", format!("bogus = 1\n{MAP}"), "bogus"),
        ("unknown_section_key.toml", format!("{MAP}[tails]\nreturn = 5\n"), "return"),
        ("bad_observable.toml", format!("{MAP}[limit]\nobservable = {{ kind = \"uniform\", expr = \"y\" }}\n"), "expected"),
        ("bad_params.toml", MAP.replace("ell1 = 0.5", "ell1 = -0.5"), "ell1"),
        ("no_experiment.toml", MAP.to_string(), "experiment"),
    ];
    for (file, text, needle) in cases {
        let text = if file == "no_experiment.toml" { text } else { format!("experiment = \"classify\"\n{text}") };
        let cfg = write(&d, file, &text);
        let o = twinmap(&cfg, &[], &d.join("out"));
        assert_eq!(o.status.code(), Some(2), "{file}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{file}: {}", stderr(&o));
    }
    let cfg = write(&d, "ok.toml", MAP);
    let o = twinmap(&cfg, &["--experiment", "nonsense"], &d.join("out"));
    assert_eq!(o.status.code(), Some(2));
    let o = twinmap(&d.join("absent.toml"), &["--experiment", "classify"], &d.join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn finite_measure_experiments_reject_infinite_measure() {
    let d = dir("infinite");
    let cfg = write(&d, "c.toml", &MAP.replace("k1 = 1.5", "k1 = 2.5").replace("k2 = 1.5", "k2 = 2.5"));
    let o = twinmap(&cfg, &["--experiment", "lyapunov"], &d.join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("finite"));
}

#[test]
fn unwritable_output_exits_3() {
    let d = dir("io");
    let cfg = write(&d, "c.toml", MAP);
    let blocker = write(&d, "file", "");
    let o = twinmap(&cfg, &["--experiment", "classify"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
