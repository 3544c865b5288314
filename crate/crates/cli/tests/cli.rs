use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_heterotune");

const SMALL: &str = r#"
mode = "heterotune"
seed = 2
rounds = 3
clients = 6
epochs = 1
batch_size = 8
dirichlet_alpha = 1.0

[[group]]
width = 8
depth = 1
bottleneck = 2
ratio = 1

[[group]]
width = 16
depth = 2
bottleneck = 2
ratio = 2

[data]
source = "blobs"
classes = 4
dims = 8
per_class = 40
"#;

fn heterotune(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_metrics_summary_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = heterotune(&["run", &cfg, "--out", "res"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let res = dir.path().join("res");
    let csv = fs::read_to_string(res.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "round,loss_g0,loss_g1,acc_g0,acc_g1,avg_acc,bytes_g0,bytes_g1"
    );
    assert_eq!(lines.len(), 4);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("summary.json")).unwrap()).unwrap();
    let last: Vec<f64> = lines[3].split(',').map(|c| c.parse().unwrap()).collect();
    // Populations 2 and 4 from the 1:2 ratio over six clients.
    assert_eq!(summary["groups"][0]["population"], 2);
    assert_eq!(summary["groups"][1]["population"], 4);
    let recomputed = (2.0 * last[3] + 4.0 * last[4]) / 6.0;
    assert!((summary["avg"].as_f64().unwrap() - recomputed).abs() < 1e-12);
    assert_eq!(summary["small"].as_f64().unwrap(), last[3]);
    assert_eq!(summary["large"].as_f64().unwrap(), last[4]);

    for name in [
        "group_0.htad",
        "group_1.htad",
        "share.htad",
        "backbone_0.htad",
        "backbone_1.htad",
    ] {
        let bytes = fs::read(res.join("checkpoints").join(name)).unwrap();
        assert_eq!(&bytes[..4], b"HTAD", "{name}");
    }
}

#[test]
fn homo_writes_one_share_file_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &SMALL.replace("heterotune", "homo"));
    assert!(heterotune(&["run", &cfg, "--out", "res"], dir.path())
        .status
        .success());
    let ck = dir.path().join("res/checkpoints");
    assert!(ck.join("share_0.htad").exists() && ck.join("share_1.htad").exists());
}

#[test]
fn repeated_runs_are_byte_identical_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    for (out, extra) in [("a", "1"), ("b", "2")] {
        let o = heterotune(&["run", &cfg, "--out", out, "--workers", extra], dir.path());
        assert!(o.status.success());
    }
    assert!(
        heterotune(&["run", &cfg, "--out", "c", "--seed", "9"], dir.path())
            .status
            .success()
    );
    let read = |d: &str| fs::read(dir.path().join(d).join("metrics.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let summary = fs::read_to_string(dir.path().join("c/summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 9"));
}

#[test]
fn output_dir_comes_from_config_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        &format!("{SMALL}\n[output]\ndir = \"from_config\"\n"),
    );
    assert!(heterotune(&["run", &cfg], dir.path()).status.success());
    assert!(dir.path().join("from_config/metrics.csv").exists());
}

#[test]
fn exit_codes_by_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| heterotune(args, d).status.code();

    assert_eq!(code(&["run", "missing.toml"]), Some(2));
    let typo = write_config(d, "typo.toml", &SMALL.replace("rounds = 3", "roundz = 3"));
    let out = heterotune(&["run", &typo], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let infeasible = write_config(
        d,
        "inf.toml",
        &SMALL.replace("dirichlet_alpha = 1.0", "min_per_client = 500"),
    );
    assert_eq!(code(&["run", &infeasible]), Some(3));

    let blowup = write_config(
        d,
        "nan.toml",
        &SMALL.replace("epochs = 1", "epochs = 1\nlr = 1e12"),
    );
    assert_eq!(code(&["run", &blowup]), Some(4));

    fs::write(d.join("blocked"), "").unwrap();
    assert_eq!(
        code(&[
            "run",
            &write_config(d, "ok.toml", SMALL),
            "--out",
            "blocked/x"
        ]),
        Some(6)
    );

    assert_eq!(code(&["run"]), Some(64));
    assert_eq!(code(&["frobnicate"]), Some(64));
    assert_eq!(code(&["run", "x.toml", "--workers", "0"]), Some(64));
}

#[test]
fn help_documents_defaults_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = heterotune(&["--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "batch_size",
        "dirichlet_alpha",
        "per_branch",
        "Exit codes",
        "HETEROTUNE_LOG",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn verify_passes_on_a_clean_build() {
    let dir = tempfile::tempdir().unwrap();
    let out = heterotune(&["verify"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("fusion_equivalence") && !text.contains("FAIL"));
}
