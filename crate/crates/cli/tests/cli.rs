mod common;

use std::process::Command;

use common::{assets, read};

fn camshot() -> Command {
    Command::new(env!("CARGO_BIN_EXE_camshot"))
}

#[test]
fn run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = assets();
    let config = dir.path().join("camshot.toml");
    let text = format!(
        "seed = 3\nscene = {:?}\nmap = {:?}\ndescriptions = {:?}\n[refine]\nB = 5\nM = 8\n",
        a.join("heatmap_scene.json"),
        a.join("maps/hall.txt"),
        a.join("heatmap_descriptions.json"),
    );
    std::fs::write(&config, text).unwrap();
    let out = dir.path().join("out");
    let status = camshot()
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("run")
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(&out, camshot::pipeline::MANIFEST)).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"], "run");
    assert!(out.join(camshot::pipeline::CONTROLS).exists());
}

#[test]
fn bad_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let output = camshot()
        .arg("--config")
        .arg(dir.path().join("absent.toml"))
        .arg("retrieve")
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("absent.toml"));
}
