use std::path::Path;
use std::process::{Command, Output};

fn dlu(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlu"))
        .args(args)
        .current_dir(dir)
        .env_remove("DLU_THREADS")
        .output()
        .expect("spawn dlu")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn cost_grid_reproduces_parameter_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("g.json"),
        r#"{"grid": {"sigma": [2, 4, 8, 16]}}"#,
    )
    .unwrap();
    let o = dlu(
        &["cost", "--config", "g.json", "--out", "r.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# dlu-cost-report v1");
    assert!(lines[1].starts_with("method,sigma,k_up,k_encoder,c_mid,c_in,params,flops_numeric,"));
    assert_eq!(lines.len(), 2 + 8);
    let shown: Vec<&str> = lines[2..]
        .iter()
        .map(|l| l.split(',').nth(11).unwrap())
        .collect();
    assert_eq!(
        shown,
        ["74K", "247K", "939K", "3.7M", "35K", "49K", "104K", "326K"]
    );
    assert!(lines[2].ends_with("199K+4×(25-D sm)"));
}

#[test]
fn cost_baselines_in_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = dlu(
        &[
            "cost",
            "--methods",
            "deconv,pixel_shuffle_up",
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["params_display"], "262K");
    assert_eq!(v[1]["params_display"], "2.4M");
    assert!(v[0]["note"].as_str().unwrap().contains("unreconciled"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        dlu(&["cost", "--methods", ""], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        dlu(&["cost", "--methods", "bicubic"], dir.path())
            .status
            .code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.json"), r#"{"grid": {"k_up": [4]}}"#).unwrap();
    assert_eq!(
        dlu(&["cost", "--config", "bad.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dlu(&["cost", "--config", "missing.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dlu(&["bench", "--repetitions", "0"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn check_passes_and_fault_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = dlu(&["check"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for op in [
        "conv2d",
        "softmax",
        "pixel_shuffle",
        "reassemble",
        "expand",
        "dlu",
        "carafe",
    ] {
        assert!(
            text.contains(&format!("gradient,\"{op}\",")),
            "missing {op}"
        );
    }
    let bad = dlu(&["check", "--inject-fault", "expand"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL gradient expand"));
}

#[test]
fn bench_rows_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("b.json"),
        r#"{"methods": ["carafe", "dlu"], "grid": {"sigma": [4], "c_in": [16], "c_mid": [8], "input_size": [[8, 8]]}}"#,
    )
    .unwrap();
    let run = |threads: &str| {
        let o = dlu(
            &[
                "bench",
                "--config",
                "b.json",
                "--repetitions",
                "2",
                "--warmup",
                "0",
                "--format",
                "json",
                "--threads",
                threads,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap()
    };
    let (a, b) = (run("1"), run("2"));
    for i in 0..2 {
        assert!(a[i]["median_ms"].as_f64().unwrap() > 0.0);
        assert_eq!(a[i]["deterministic"], true);
        assert_eq!(a[i]["checksum"], b[i]["checksum"]);
    }
    assert_eq!(b[0]["threads"], 2);
}

#[test]
fn train_writes_curve_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let o = dlu(
        &[
            "train",
            "--steps",
            "20",
            "--out",
            "curve.csv",
            "--params-out",
            "params",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("# dlu-loss-curve v1\nstep,train_loss,eval_loss\n"));
    assert_eq!(curve.lines().count(), 22);
    assert!(dir
        .path()
        .join("params/offset_predictor.weight.dlut")
        .exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nearest baseline"));
    let again = dlu(
        &[
            "train",
            "--steps",
            "20",
            "--out",
            "curve2.csv",
            "--threads",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("curve2.csv")).unwrap(),
        curve
    );
}
