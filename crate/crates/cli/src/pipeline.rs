//! The pipeline stages as commands. Stages talk only through the JSON and CSV
//! files in the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use camshot_core::embed::{cosine, hash_embedding, ingest_frames, FrameRecord, SyntheticScene};
use camshot_core::flight::plan_flight;
use camshot_core::geom::{wrap, Pose4};
use camshot_core::oracle::{HumanOracle, PreferenceOracle, RemoteChooser, RemoteOracle, SessionHub, SyntheticOracle, SyntheticUtility};
use camshot_core::plan::{distance_transform, DistanceField, VoxelGrid};
use camshot_core::refine::{trace_csv, RefineConfig, Refiner, WaypointTask};
use camshot_core::retrieve::{
    heatmap_csv, load_descriptions, retrieve_candidates, score_frames, select_and_sort, Chooser, DeterministicChooser,
    OrderedWaypoints, ScriptedChooser, WaypointDescription,
};
use camshot_core::scan::synthetic_scan;
use camshot_core::traj::controls_to_csv;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall};
use serde::{Deserialize, Serialize};

use crate::config::{ChooserKind, OracleKind, PipelineConfig};
use crate::seeds::stage_seed;

pub const ORDERED: &str = "ordered_waypoints.json";
pub const REFINED: &str = "refined_waypoints.json";
pub const CORRIDOR: &str = "corridor.json";
pub const TRAJECTORY: &str = "trajectory.json";
pub const CONTROLS: &str = "trajectory.csv";
pub const ROBUSTNESS: &str = "robustness.csv";
pub const ROBUSTNESS_STARTS: &str = "robustness_starts.json";
pub const MANIFEST: &str = "manifest.json";

/// Scene, map and descriptions, loaded once per command.
pub struct Inputs {
    pub scene: SyntheticScene,
    pub grid: VoxelGrid,
    pub field: DistanceField,
    pub descriptions: Vec<WaypointDescription>,
}

impl Inputs {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let scene = SyntheticScene::load(&cfg.scene).with_context(|| format!("scene {}", cfg.scene.display()))?;
        let grid = VoxelGrid::load(&cfg.map).with_context(|| format!("map {}", cfg.map.display()))?;
        let descriptions = load_descriptions(&cfg.descriptions, Some(&scene), scene.dim())
            .with_context(|| format!("descriptions {}", cfg.descriptions.display()))?;
        let field = distance_transform(&grid);
        Ok(Inputs {
            scene,
            grid,
            field,
            descriptions,
        })
    }

    pub fn frames(&self, cfg: &PipelineConfig) -> Result<Vec<FrameRecord>> {
        match &cfg.frames {
            Some(path) => ingest_frames(path).with_context(|| format!("frames {}", path.display())),
            None => Ok(synthetic_scan(&self.scene, &self.grid, &cfg.scan)?),
        }
    }

    pub fn description(&self, k: usize) -> Result<&WaypointDescription> {
        self.descriptions
            .iter()
            .find(|d| d.k == k)
            .ok_or_else(|| anyhow!("no description with index {k}"))
    }
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(out, name, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(out: &Path, name: &str) -> Result<T> {
    let path = out.join(name);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn heatmap_name(k: usize) -> String {
    format!("heatmap_{k}.csv")
}

pub fn trace_name(i: usize) -> String {
    format!("trace_{i:02}.csv")
}

/// Ranks frames, lets the configured chooser pick and order the waypoints,
/// and writes one heatmap per description.
pub fn cmd_retrieve(cfg: &PipelineConfig, inputs: &Inputs) -> Result<OrderedWaypoints> {
    let descriptions = &inputs.descriptions;
    if descriptions.is_empty() {
        let empty = OrderedWaypoints { waypoints: Vec::new() };
        write_json(&cfg.out, ORDERED, &empty)?;
        return Ok(empty);
    }
    let frames = inputs.frames(cfg)?;
    let sets = retrieve_candidates(descriptions, &frames, cfg.retrieve.top_k)?;
    let mut chooser: Box<dyn Chooser> = match cfg.retrieve.chooser {
        ChooserKind::Deterministic => Box::new(DeterministicChooser),
        ChooserKind::Scripted => {
            let script = cfg.retrieve.script.as_ref().expect("validated at load");
            Box::new(ScriptedChooser::load(script).with_context(|| format!("chooser script {}", script.display()))?)
        }
        ChooserKind::Remote => Box::new(RemoteChooser::new(
            cfg.oracle.url.clone().expect("validated at load"),
            Duration::from_secs_f64(cfg.oracle.timeout_s),
            Some(inputs.scene.clone()),
        )?),
    };
    let ordered = select_and_sort(&sets, descriptions, chooser.as_mut())?;
    for d in descriptions {
        let scores = score_frames(d, &frames)?;
        write(&cfg.out, &heatmap_name(d.k), heatmap_csv(&frames, &scores))?;
    }
    write_json(&cfg.out, ORDERED, &ordered)?;
    log::info!("retrieved {} waypoints from {} frames", ordered.waypoints.len(), frames.len());
    Ok(ordered)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedWaypoint {
    pub k: usize,
    pub initial: Pose4,
    pub pose: Pose4,
    pub promotions: usize,
    /// Similarity of the final view to the description.
    pub final_sim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedWaypoints {
    pub waypoints: Vec<RefinedWaypoint>,
}

impl RefinedWaypoints {
    pub fn poses(&self) -> Vec<Pose4> {
        self.waypoints.iter().map(|w| w.pose).collect()
    }
}

pub fn refine_config(cfg: &PipelineConfig, stage: &str) -> RefineConfig {
    RefineConfig {
        seed: stage_seed(cfg.seed, stage),
        ..cfg.refine
    }
}

/// Refines every ordered waypoint with the configured oracle. Traces are
/// written even for waypoints that fail. `human` is the session that
/// carries comparisons when the oracle is human.
pub fn cmd_refine(cfg: &PipelineConfig, inputs: &Inputs, human: Option<&Arc<SessionHub>>) -> Result<RefinedWaypoints> {
    let ordered: OrderedWaypoints = read_json(&cfg.out, ORDERED)?;
    let tasks = ordered
        .waypoints
        .iter()
        .map(|w| {
            let d = inputs.description(w.k)?;
            Ok(WaypointTask {
                seed: w.pose,
                description: d,
                target: Some(d.d.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let refiner = Refiner::new(&inputs.scene, &inputs.grid, refine_config(cfg, "refine"), cfg.trust_region)?;
    let oracle_seed = stage_seed(cfg.seed, "oracle");
    let o = &cfg.oracle;
    let hub = match (o.kind, human) {
        (OracleKind::Human, Some(h)) => Some(Arc::clone(h)),
        (OracleKind::Human, None) => bail!("the human oracle needs a running session service"),
        _ => None,
    };
    if let Some(h) = &hub {
        h.set_total(cfg.refine.iterations);
    }
    let mut setup_error = None;
    let results = refiner.refine_all(&tasks, |i, task| -> Box<dyn PreferenceOracle> {
        match o.kind {
            OracleKind::Synthetic => {
                let u = SyntheticUtility::new(task.description.d.clone(), o.noise_beta).expect("validated at load");
                Box::new(SyntheticOracle::new(u, oracle_seed.wrapping_add(i as u64)))
            }
            OracleKind::Remote => {
                let url = o.url.clone().expect("validated at load");
                match RemoteOracle::new(url, Duration::from_secs_f64(o.timeout_s)) {
                    Ok(r) => Box::new(r),
                    Err(e) => {
                        setup_error.get_or_insert(e);
                        Box::new(camshot_core::oracle::AlwaysIncumbent)
                    }
                }
            }
            OracleKind::Human => Box::new(HumanOracle::new(
                hub.clone().expect("checked above"),
                Duration::from_secs_f64(o.deadline_s),
            )),
        }
    });
    if let Some(e) = setup_error {
        return Err(e).context("remote oracle");
    }

    let mut refined = Vec::new();
    let mut failures = Vec::new();
    for (i, (r, w)) in results.into_iter().zip(&ordered.waypoints).enumerate() {
        match r {
            Ok(r) => {
                write(&cfg.out, &trace_name(i), trace_csv(&r.trace))?;
                refined.push(RefinedWaypoint {
                    k: w.k,
                    initial: w.pose,
                    pose: r.pose,
                    promotions: r.promotions(),
                    final_sim: r.trace.last().and_then(|t| t.sim),
                });
            }
            Err(f) => {
                write(&cfg.out, &trace_name(i), trace_csv(&f.partial))?;
                failures.push(f.to_string());
            }
        }
    }
    if let Some(h) = &hub {
        h.finish(refined.last().map(|w| w.pose), failures.first().cloned());
    }
    if !failures.is_empty() {
        bail!("refinement failed: {}", failures.join("; "));
    }
    let refined = RefinedWaypoints { waypoints: refined };
    write_json(&cfg.out, REFINED, &refined)?;
    Ok(refined)
}

#[derive(Serialize)]
struct CorridorDoc<'a> {
    polyline: &'a camshot_core::plan::Polyline,
    corridor: &'a [camshot_core::plan::CorridorBox],
}

#[derive(Serialize)]
struct TrajectoryDoc<'a> {
    knot_times: &'a [f64],
    trajectory: &'a camshot_core::traj::FlightTrajectory,
}

/// Plans the flight through the refined waypoints read from disk.
pub fn cmd_plan(cfg: &PipelineConfig, inputs: &Inputs) -> Result<camshot_core::flight::FlightPlan> {
    let refined: RefinedWaypoints = read_json(&cfg.out, REFINED)?;
    if refined.waypoints.is_empty() {
        bail!("no refined waypoints to plan through");
    }
    let plan = plan_flight(&inputs.field, &refined.poses(), &cfg.plan).map_err(|e| anyhow!("plan stage {e}"))?;
    write_json(
        &cfg.out,
        CORRIDOR,
        &CorridorDoc {
            polyline: &plan.polyline,
            corridor: &plan.corridor,
        },
    )?;
    write_json(
        &cfg.out,
        TRAJECTORY,
        &TrajectoryDoc {
            knot_times: &plan.knot_times,
            trajectory: &plan.trajectory,
        },
    )?;
    write(&cfg.out, CONTROLS, controls_to_csv(&plan.controls))?;
    log::info!(
        "planned {:.2} s through {} waypoints ({} corridor boxes)",
        plan.knot_times.last().copied().unwrap_or(0.0),
        refined.waypoints.len(),
        plan.corridor.len()
    );
    Ok(plan)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(crate::seeds::sha256_hex(&bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub oracle: OracleKind,
    pub stage_seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created: u64,
}

pub const STAGES: [&str; 4] = ["refine", "oracle", "robustness", "session"];

pub fn write_manifest(cfg: &PipelineConfig, command: &str) -> Result<Manifest> {
    let mut inputs = BTreeMap::new();
    for (name, path) in [("scene", &cfg.scene), ("map", &cfg.map), ("descriptions", &cfg.descriptions)] {
        inputs.insert(name.to_string(), sha256_file(path)?);
    }
    if let Some(f) = &cfg.frames {
        inputs.insert("frames".into(), sha256_file(f)?);
    }
    let manifest = Manifest {
        command: command.into(),
        config_hash: cfg.hash.clone(),
        seed: cfg.seed,
        oracle: cfg.oracle.kind,
        stage_seeds: STAGES.iter().map(|s| (s.to_string(), stage_seed(cfg.seed, s))).collect(),
        inputs,
        versions: BTreeMap::from([
            ("camshot".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("camshot-core".to_string(), camshot_core::VERSION.to_string()),
        ]),
        created: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_json(&cfg.out, MANIFEST, &manifest)?;
    Ok(manifest)
}

/// Retrieve, refine and plan in sequence, then the manifest.
pub fn cmd_run(cfg: &PipelineConfig, human: Option<&Arc<SessionHub>>) -> Result<()> {
    let inputs = Inputs::load(cfg)?;
    cmd_retrieve(cfg, &inputs)?;
    cmd_refine(cfg, &inputs, human)?;
    cmd_plan(cfg, &inputs)?;
    write_manifest(cfg, "run")?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RobustnessReport {
    pub initial: Vec<Pose4>,
    /// Per run, similarity to the target view at iterations 0..=B.
    pub sims: Vec<Vec<f64>>,
}

impl RobustnessReport {
    pub fn final_sims(&self) -> Vec<f64> {
        self.sims.iter().map(|s| *s.last().expect("iteration 0 is always present")).collect()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("run,iter,sim\n");
        for (run, sims) in self.sims.iter().enumerate() {
            for (iter, v) in sims.iter().enumerate() {
                s.push_str(&format!("{run},{iter},{v}\n"));
            }
        }
        s
    }
}

/// Draws a free start pose within `radius` of `target`.
fn start_pose(refiner: &Refiner, target: &Pose4, radius: f64, yaw_offset: Option<f64>, rng: &mut ChaCha8Rng) -> Result<Pose4> {
    for _ in 0..10_000 {
        let u: [f64; 3] = UnitBall.sample(rng);
        let p = target.p + Vector3::from(u) * radius;
        let theta = match yaw_offset {
            Some(o) => wrap(target.theta + o),
            None => wrap(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
        };
        if refiner.feasible(&p) && (refiner.tr.z_min..=refiner.tr.z_max).contains(&p.z) {
            return Ok(Pose4 { p, theta });
        }
    }
    bail!("no free start pose within {radius} m of the target")
}

/// Seeded refinement runs from random starts around a target pose, scored by
/// similarity to the target view.
pub fn cmd_robustness(cfg: &PipelineConfig, inputs: &Inputs) -> Result<RobustnessReport> {
    let settings = cfg
        .robustness
        .as_ref()
        .context("the robustness command needs a [robustness] section")?;
    let base = Refiner::new(&inputs.scene, &inputs.grid, cfg.refine, cfg.trust_region)?;
    let target = settings.target;
    if !base.feasible(&target.p) {
        bail!("robustness target is not in free space");
    }
    let target_view = base.view(&target)?;
    let description = WaypointDescription::new(0, settings.label.clone(), hash_embedding(&settings.label, inputs.scene.dim()))?;
    let master = stage_seed(cfg.seed, "robustness");
    let oracle_seed = stage_seed(cfg.seed, "oracle");

    let runs: Vec<Result<(Pose4, Vec<f64>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..settings.runs)
            .map(|run| {
                let (description, target_view) = (&description, &target_view);
                s.spawn(move || -> Result<(Pose4, Vec<f64>)> {
                    let seed = master.wrapping_add(run as u64);
                    let refiner = Refiner {
                        cfg: RefineConfig { seed, ..cfg.refine },
                        ..base
                    };
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let start = start_pose(&refiner, &target, settings.radius, settings.yaw_offset, &mut rng)?;
                    let mut oracle: Box<dyn PreferenceOracle> = match cfg.oracle.kind {
                        OracleKind::Synthetic => Box::new(SyntheticOracle::new(
                            SyntheticUtility::new(target_view.clone(), cfg.oracle.noise_beta)?,
                            oracle_seed.wrapping_add(run as u64),
                        )),
                        OracleKind::Remote => Box::new(RemoteOracle::new(
                            cfg.oracle.url.clone().expect("validated at load"),
                            Duration::from_secs_f64(cfg.oracle.timeout_s),
                        )?),
                        OracleKind::Human => bail!("robustness runs take a synthetic or remote oracle"),
                    };
                    let task = WaypointTask {
                        seed: start,
                        description,
                        target: Some(target_view.clone()),
                    };
                    let r = refiner
                        .refine_pose(&task, oracle.as_mut())
                        .map_err(|f| anyhow!("run {run}: {f}"))?;
                    let mut sims = vec![cosine(&refiner.view(&start)?, target_view)?];
                    sims.extend(r.trace.iter().map(|t| t.sim.expect("target set")));
                    Ok((start, sims))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("robustness worker panicked")).collect()
    });
    let (initial, sims) = runs.into_iter().collect::<Result<(Vec<_>, Vec<_>)>>()?;
    let report = RobustnessReport { initial, sims };
    write(&cfg.out, ROBUSTNESS, report.csv())?;
    write_json(&cfg.out, ROBUSTNESS_STARTS, &report.initial)?;
    write_manifest(cfg, "robustness")?;
    Ok(report)
}
