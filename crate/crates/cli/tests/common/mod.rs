#![allow(dead_code)]

use std::path::{Path, PathBuf};

use camshot::config::PipelineConfig;

pub fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

/// Config over the three-landmark hall, with `extra` TOML appended.
/// Output goes to `dir/out`.
pub fn hall_config(dir: &Path, extra: &str) -> PipelineConfig {
    let a = assets();
    let text = format!(
        "seed = 7\nout = \"out\"\nscene = {:?}\nmap = {:?}\ndescriptions = {:?}\n{extra}",
        a.join("heatmap_scene.json"),
        a.join("maps/hall.txt"),
        a.join("heatmap_descriptions.json"),
    );
    PipelineConfig::parse(&text, dir).expect("test config")
}

pub fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}
