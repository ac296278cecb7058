//! Pipeline configuration, read from TOML. Relative paths resolve against
//! the directory of the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use camshot_core::flight::PlanParams;
use camshot_core::geom::Pose4;
use camshot_core::refine::{RefineConfig, TrustRegion};
use camshot_core::scan::ScanParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Synthetic,
    Remote,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChooserKind {
    #[default]
    Deterministic,
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieveSettings {
    pub top_k: usize,
    pub chooser: ChooserKind,
    /// Script for the scripted chooser.
    pub script: Option<PathBuf>,
}

impl Default for RetrieveSettings {
    fn default() -> Self {
        RetrieveSettings {
            top_k: camshot_core::retrieve::DEFAULT_TOP_K,
            chooser: ChooserKind::Deterministic,
            script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub kind: OracleKind,
    /// Bradley–Terry sharpness of the synthetic oracle; 0 is noiseless.
    pub noise_beta: f64,
    /// Base URL of the remote comparison service.
    pub url: Option<String>,
    pub timeout_s: f64,
    /// How long a human session waits for each answer.
    pub deadline_s: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            kind: OracleKind::Synthetic,
            noise_beta: 0.0,
            url: None,
            timeout_s: 30.0,
            deadline_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSettings {
    /// Instruction shown to remote oracles.
    pub label: String,
    pub target: Pose4,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Initial positions are drawn uniformly from this ball around the target.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Fixed initial yaw offset from the target yaw; uniform when absent.
    #[serde(default)]
    pub yaw_offset: Option<f64>,
}

fn default_runs() -> usize {
    7
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub addr: String,
    /// Directory holding the built UI; a placeholder page is served without it.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServeSettings {
    fn default() -> Self {
        ServeSettings {
            addr: "127.0.0.1:8080".into(),
            ui_dir: None,
        }
    }
}

fn default_trust_region() -> TrustRegion {
    TrustRegion {
        rho_rot: std::f64::consts::FRAC_PI_6,
        rho_trans: 1.0,
        z_min: 0.3,
        z_max: 2.7,
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub scene: PathBuf,
    pub map: PathBuf,
    pub descriptions: PathBuf,
    /// Recorded frames; a synthetic scan is generated when absent.
    #[serde(default)]
    pub frames: Option<PathBuf>,
    #[serde(default)]
    pub scan: ScanParams,
    #[serde(default)]
    pub retrieve: RetrieveSettings,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default = "default_trust_region")]
    pub trust_region: TrustRegion,
    #[serde(default)]
    pub plan: PlanParams,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub robustness: Option<RobustnessSettings>,
    #[serde(default)]
    pub serve: ServeSettings,
    /// SHA-256 of the config text, filled in at load.
    #[serde(skip)]
    pub hash: String,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn must_exist(what: &str, p: &Path) -> Result<()> {
    ensure!(p.exists(), "{what} not found: {}", p.display());
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    /// Parses config text whose relative paths are anchored at `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.hash = crate::seeds::sha256_hex(text.as_bytes());
        for p in [&mut cfg.out, &mut cfg.scene, &mut cfg.map, &mut cfg.descriptions] {
            resolve(base, p);
        }
        for p in [&mut cfg.frames, &mut cfg.retrieve.script, &mut cfg.serve.ui_dir]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate().context("[refine]")?;
        self.trust_region.validate().context("[trust_region]")?;
        self.plan.limits().context("[plan]")?;
        ensure!(self.plan.dt > 0.0, "[plan] dt must be > 0");
        ensure!(self.retrieve.top_k >= 1, "[retrieve] top_k must be ≥ 1");
        must_exist("scene", &self.scene)?;
        must_exist("map", &self.map)?;
        must_exist("descriptions", &self.descriptions)?;
        if let Some(f) = &self.frames {
            must_exist("frames", f)?;
        }
        match (self.retrieve.chooser, &self.retrieve.script) {
            (ChooserKind::Scripted, None) => bail!("[retrieve] the scripted chooser needs `script`"),
            (_, Some(s)) => must_exist("chooser script", s)?,
            _ => {}
        }
        if let Some(d) = &self.serve.ui_dir {
            must_exist("ui_dir", d)?;
        }
        self.check_oracle()?;
        if let Some(r) = &self.robustness {
            ensure!(r.runs >= 1, "[robustness] runs must be ≥ 1");
            ensure!(r.radius >= 0.0, "[robustness] radius must be ≥ 0");
        }
        Ok(())
    }

    fn check_oracle(&self) -> Result<()> {
        let o = &self.oracle;
        ensure!(o.noise_beta >= 0.0 && o.noise_beta.is_finite(), "[oracle] noise_beta must be ≥ 0");
        ensure!(o.timeout_s > 0.0 && o.deadline_s > 0.0, "[oracle] timeouts must be > 0");
        let wants_url = o.kind == OracleKind::Remote || self.retrieve.chooser == ChooserKind::Remote;
        ensure!(!wants_url || o.url.is_some(), "[oracle] remote use needs `url`");
        Ok(())
    }

    /// Applies command-line overrides and revalidates.
    pub fn override_with(&mut self, out: Option<PathBuf>, seed: Option<u64>, oracle: Option<OracleKind>) -> Result<()> {
        if let Some(o) = out {
            self.out = o;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(k) = oracle {
            self.oracle.kind = k;
        }
        self.check_oracle()
    }
}
