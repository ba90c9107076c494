use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_teleport-lab");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("TELEPORT_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic device shared by the tests below.
fn device(dir: &Path) -> PathBuf {
    let config = dir.join("gen.json");
    std::fs::write(&config, r#"{"pair_shots": 128, "calibration_shots": 1024}"#).unwrap();
    let out = dir.join("device.json");
    ok(&["gen-device", "--config", path_str(&config), "--seed", "5", "--out", path_str(&out)]);
    out
}

#[test]
fn plot_matches_golden_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("out.svg");
    let out = ok(&["plot", path_str(&fixture("two_modes.csv")), "--out", path_str(&svg), "--title", "Two modes"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 1 malformed rows"));
    let got = std::fs::read_to_string(&svg).unwrap();
    let golden = fixture("two_modes.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    let want = std::fs::read_to_string(&golden).expect("golden file; regenerate with UPDATE_GOLDEN=1");
    assert_eq!(got, want);
    assert_eq!(got.matches("<polyline").count(), 2);
    assert_eq!(got.matches("<polygon").count(), 2);
    assert!(got.contains("#1f77b4") && got.contains("#d62728"));
}

#[test]
fn empty_results_give_bare_axes() {
    let dir = tempfile::tempdir().unwrap();
    let blank = dir.path().join("blank.csv");
    std::fs::write(&blank, "").unwrap();
    for input in [fixture("empty.csv"), blank] {
        let svg = dir.path().join("empty.svg");
        ok(&["plot", path_str(&input), "--out", path_str(&svg)]);
        let text = std::fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert!(!text.contains("<polyline"));
    }
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let dev = device(dir.path());
    let csv = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = Command::new(BIN)
            .args([
                "run", "--device", path_str(&dev), "--protocol", "neg-qrem,gate-fid", "--hops", "1..2",
                "--paths", "2", "--trials", "2", "--shots", "256", "--seed", "9", "--out", path_str(&out),
            ])
            .env("TELEPORT_LAB_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = csv("a.csv", "1");
    let b = csv("b.csv", "4");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# teleport-lab results v1\n"));
    assert!(text.lines().skip(2).all(|l| l.ends_with(",ok") || l.ends_with(",absent")));
}

#[test]
fn noiseless_config_gives_maximal_negativity() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("spec.json");
    std::fs::write(
        &config,
        r#"{"hops": "1..5", "trials": 1, "qrem": "off", "seed": 3,
            "noise": {"one_qubit_depol": 0, "two_qubit_depol": 0, "t1_us": null, "t2_us": null,
                      "dynamic_correction_latency_us": 0,
                      "default_readout": [[1, 0], [0, 1]]}}"#,
    )
    .unwrap();
    let out = ok(&["run", "--config", path_str(&config)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[12] == "absent" {
            continue;
        }
        let n: f64 = cols[8].parse().unwrap();
        assert!((n - 0.5).abs() < 0.02, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn find_paths_lists_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    let dev = device(dir.path());
    let listing = dir.path().join("paths.json");
    let out = ok(&[
        "find-paths", "--device", path_str(&dev), "--protocol", "gate-fid", "--hops", "3", "--paths", "4",
        "--out", path_str(&listing),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&listing).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);
    assert_eq!(json[0]["qubits"].as_array().unwrap().len(), 5);

    let out = ok(&["find-paths", "--device", path_str(&dev), "--protocol", "neg", "--hops", "130"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fewer than 4 paths"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"qubits": [{"id": 0}], "edges": [{"a": 0, "b": 1, "gate_error": 0.1}]}"#).unwrap();
    let out = run(&["find-paths", "--device", path_str(&broken)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("edges[0].b"));
    assert!(!run(&["find-paths", "--device", "/nonexistent/device.json"]).status.success());
    assert!(!run(&["run", "--hops", "5..2"]).status.success());
    let threads = Command::new(BIN)
        .args(["plot", path_str(&fixture("empty.csv")), "--out", path_str(&dir.path().join("x.svg"))])
        .env("TELEPORT_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!threads.status.success());
}

#[test]
fn decay_reports_the_window() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    let svg = dir.path().join("decay.svg");
    let out = ok(&["decay", "--delays", "0..5:0.05", "--out", path_str(&csv), "--svg", path_str(&svg)]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("monotone: yes"), "{stderr}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2 + 101);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));

    let dev = device(dir.path());
    let a = ok(&["decay", "--device", path_str(&dev), "--delays", "0..1:0.5", "--shots", "256", "--seed", "4"]).stdout;
    let b = ok(&["decay", "--device", path_str(&dev), "--delays", "0..1:0.5", "--shots", "256", "--seed", "4"]).stdout;
    assert_eq!(a, b);
}
