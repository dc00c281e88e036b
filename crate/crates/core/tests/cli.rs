use std::path::Path;
use std::process::{Command, Output};

const SMOKE: &str = include_str!("../configs/smoke.toml");

fn cavlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn too_few_positives_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMOKE.replace("n_pos = 20", "n_pos = 1000"));
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for stage in ["gen-data", "train"] {
        let res = cavlab(&[stage, "--config", &cfg, "--out", out]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let res = cavlab(&["extract-cavs", "--config", &cfg, "--out", out, "--workers", "2"]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("insufficient samples"), "{stderr}");
}

#[test]
fn unknown_config_key_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMOKE}\n[extra]\nkey = 1\n"));
    let res = cavlab(&["gen-data", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let res = cavlab(&["extract-cavs", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn reproduce_prints_run_hash_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().to_str().unwrap();
    let first = cavlab(&["reproduce", "--config", &cfg, "--out", out]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    // a second run over the same directory finds identical artifacts
    let second = cavlab(&["reproduce", "--config", &cfg, "--out", out, "--workers", "1"]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(first.stdout, second.stdout);
    let line = String::from_utf8(first.stdout).unwrap();
    let hash = line.split_whitespace().next().unwrap();
    assert_eq!(hash.len(), 64);

    let explain = |method: &str| {
        let res = cavlab(&[
            "explain", "--config", &cfg, "--out", out, "--sample", "3", "--concept", "CARDIO", "--method", method,
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        Path::new(String::from_utf8(res.stdout).unwrap().trim()).to_path_buf()
    };
    let panel = explain("cav_mean");
    for f in ["original.pgm", "curtailed.pgm", "exaggerated.pgm", "attribution.pgm", "attribution.json"] {
        assert!(panel.join(f).is_file(), "{f}");
    }
    let panel = explain("latent_shift");
    assert!(panel.join("attribution.pgm").is_file());
}
