//! Pose refinement by preference-based Bayesian optimization.
//!
//! Each iteration samples candidates in a trust region around the incumbent,
//! picks a challenger by dueling Thompson sampling on the preference GP,
//! asks an oracle which of the two views it prefers, refits, and promotes
//! the challenger when it wins.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::UnitSphere;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedding, SyntheticScene};
use crate::error::{Error, Result};
use crate::geom::{wrap, Pose4};
use crate::gp::{laplace_fit_warm, GPState, KernelParams, PreferenceObservation};
use crate::oracle::{Duel, PreferenceOracle};
use crate::plan::VoxelGrid;
use crate::retrieve::WaypointDescription;

/// Attempts allowed per requested candidate before giving up.
pub const ATTEMPTS_PER_CANDIDATE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub rho_rot: f64,
    pub rho_trans: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl TrustRegion {
    pub fn new(rho_rot: f64, rho_trans: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let tr = TrustRegion {
            rho_rot,
            rho_trans,
            z_min,
            z_max,
        };
        tr.validate()?;
        Ok(tr)
    }

    /// Default radii (30°, 1 m) with the given altitude band.
    pub fn with_altitude(z_min: f64, z_max: f64) -> Result<Self> {
        Self::new(PI / 6.0, 1.0, z_min, z_max)
    }

    /// Zero radii are accepted; they collapse every candidate onto the
    /// incumbent.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_rot >= 0.0 && self.rho_rot <= PI) {
            return Err(Error::InvalidArgument(format!("rho_rot {} outside [0, π]", self.rho_rot)));
        }
        if !(self.rho_trans >= 0.0 && self.rho_trans.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho_trans {} must be ≥ 0", self.rho_trans)));
        }
        if !(self.z_min < self.z_max) {
            return Err(Error::InvalidArgument(format!(
                "z_min {} must be below z_max {}",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    #[serde(rename = "B")]
    pub iterations: usize,
    #[serde(rename = "M")]
    pub candidates: usize,
    pub seed: u64,
    pub share_gp: bool,
    /// Hide landmarks behind occupied voxels when computing views.
    pub occlusion: bool,
    pub kernel: KernelParams,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            iterations: 100,
            candidates: 64,
            seed: 0,
            share_gp: false,
            occlusion: true,
            kernel: KernelParams::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.candidates == 0 {
            return Err(Error::InvalidArgument("B and M must both be ≥ 1".into()));
        }
        self.kernel.validate()
    }
}

/// Candidates around `incumbent` that land in free voxels of `grid`.
pub fn sample_candidates<R: Rng + ?Sized>(
    incumbent: &Pose4,
    m: usize,
    tr: &TrustRegion,
    grid: &VoxelGrid,
    rng: &mut R,
) -> Result<Vec<Pose4>> {
    sample_candidates_where(incumbent, m, tr, |p| grid.is_free_point(p), rng)
}

/// As [`sample_candidates`] with an arbitrary feasibility test.
pub fn sample_candidates_where<R: Rng + ?Sized>(
    incumbent: &Pose4,
    m: usize,
    tr: &TrustRegion,
    feasible: impl Fn(&Vector3<f64>) -> bool,
    rng: &mut R,
) -> Result<Vec<Pose4>> {
    tr.validate()?;
    if !feasible(&incumbent.p) {
        return Err(Error::InvalidArgument("incumbent is not in free space".into()));
    }
    let mut out = Vec::with_capacity(m);
    for _ in 0..ATTEMPTS_PER_CANDIDATE * m {
        if out.len() == m {
            break;
        }
        let dtheta = rng.random_range(-tr.rho_rot..=tr.rho_rot);
        let u: [f64; 3] = rng.sample(UnitSphere);
        let r = rng.random_range(0.0..=tr.rho_trans);
        let mut p = incumbent.p + Vector3::from(u) * r;
        p.z = p.z.clamp(tr.z_min, tr.z_max);
        if feasible(&p) {
            out.push(Pose4 {
                p,
                theta: wrap(incumbent.theta + dtheta),
            });
        }
    }
    if out.len() < m {
        return Err(Error::InfeasibleRegion {
            found: out.len(),
            requested: m,
        });
    }
    Ok(out)
}

/// One joint posterior draw over the incumbent and the candidates; returns
/// the candidate with the largest sampled advantage over the incumbent.
pub fn dueling_ts_select<R: Rng + ?Sized>(
    gp: &GPState,
    incumbent: &Pose4,
    candidates: &[Pose4],
    rng: &mut R,
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    let mut q = Vec::with_capacity(candidates.len() + 1);
    q.push(*incumbent);
    q.extend_from_slice(candidates);
    let f = gp.sample(&q, rng);
    let mut best = (0, f[1] - f[0]);
    for m in 1..candidates.len() {
        let a = f[m + 1] - f[0];
        if a > best.1 {
            best = (m, a);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based.
    pub iter: usize,
    /// Incumbent after this iteration's promotion decision.
    pub incumbent: Pose4,
    pub challenger: Pose4,
    pub advantage: f64,
    pub outcome: i8,
    pub sim: Option<f64>,
}

pub type RefineTrace = Vec<TraceRecord>;

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from("iter,px,py,pz,theta,adv,outcome,sim\n");
    for r in trace {
        let p = &r.incumbent.p;
        let sim = r.sim.map_or(String::new(), |v| format!("{v}"));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.iter, p.x, p.y, p.z, r.incumbent.theta, r.advantage, r.outcome, sim
        );
    }
    s
}

/// Training data carried between fits (and between waypoints when the GP is
/// shared).
#[derive(Debug, Clone, Default)]
pub struct GpMemory {
    pub x: Vec<Pose4>,
    pub obs: Vec<PreferenceObservation>,
    alpha: Option<DVector<f64>>,
}

impl GpMemory {
    fn push(&mut self, pose: Pose4) -> usize {
        self.x.push(pose);
        self.x.len() - 1
    }

    fn fit(&mut self, params: &KernelParams) -> Result<GPState> {
        let state = laplace_fit_warm(&self.x, &self.obs, params, self.alpha.as_ref())?;
        self.alpha = Some(state.alpha().clone());
        Ok(state)
    }
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub pose: Pose4,
    pub trace: RefineTrace,
    pub gp: GPState,
}

impl Refined {
    pub fn promotions(&self) -> usize {
        self.trace.iter().filter(|r| r.outcome > 0).count()
    }
}

/// A failed refinement with whatever trace was recorded before the failure.
#[derive(Debug)]
pub struct RefineFailure {
    /// Waypoint position in the visiting order.
    pub index: usize,
    pub error: Error,
    pub incumbent: Pose4,
    pub partial: RefineTrace,
}

impl fmt::Display for RefineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "waypoint {} failed after {} iterations: {}",
            self.index,
            self.partial.len(),
            self.error
        )
    }
}

impl std::error::Error for RefineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// One waypoint to refine. `target` only feeds the trace's similarity
/// column.
#[derive(Debug, Clone)]
pub struct WaypointTask<'a> {
    pub seed: Pose4,
    pub description: &'a WaypointDescription,
    pub target: Option<Embedding>,
}

/// Shared inputs of a refinement run.
#[derive(Debug, Clone, Copy)]
pub struct Refiner<'a> {
    pub scene: &'a SyntheticScene,
    pub grid: &'a VoxelGrid,
    pub cfg: RefineConfig,
    pub tr: TrustRegion,
}

impl<'a> Refiner<'a> {
    pub fn new(scene: &'a SyntheticScene, grid: &'a VoxelGrid, cfg: RefineConfig, tr: TrustRegion) -> Result<Self> {
        cfg.validate()?;
        tr.validate()?;
        Ok(Refiner { scene, grid, cfg, tr })
    }

    pub fn feasible(&self, p: &Vector3<f64>) -> bool {
        self.grid.is_free_point(p) && self.scene.bounds.contains(p)
    }

    pub fn view(&self, pose: &Pose4) -> Result<Embedding> {
        let occluder = if self.cfg.occlusion { Some(self.grid) } else { None };
        self.scene.view_embedding_with(pose, occluder)
    }

    /// Refines one seed with a fresh GP, using `cfg.seed` for the rng.
    pub fn refine_pose(
        &self,
        task: &WaypointTask,
        oracle: &mut dyn PreferenceOracle,
    ) -> std::result::Result<Refined, RefineFailure> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        self.refine_with(task, oracle, &mut GpMemory::default(), &mut rng)
    }

    /// Refines one seed, extending `memory` with its comparisons.
    pub fn refine_with(
        &self,
        task: &WaypointTask,
        oracle: &mut dyn PreferenceOracle,
        memory: &mut GpMemory,
        rng: &mut ChaCha8Rng,
    ) -> std::result::Result<Refined, RefineFailure> {
        let mut trace = Vec::with_capacity(self.cfg.iterations);
        let mut incumbent = task.seed;
        let fail = |error: Error, incumbent: Pose4, trace: RefineTrace| RefineFailure {
            index: 0,
            error,
            incumbent,
            partial: trace,
        };
        if !self.feasible(&incumbent.p) {
            return Err(fail(
                Error::InvalidArgument("seed pose is not in free space".into()),
                incumbent,
                trace,
            ));
        }
        let mut view_inc = match self.view(&incumbent) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, incumbent, trace)),
        };
        let mut inc_idx = memory.push(incumbent);
        let mut gp = match memory.fit(&self.cfg.kernel) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, incumbent, trace)),
        };

        for iter in 1..=self.cfg.iterations {
            let step = (|| -> Result<(Pose4, f64, i8, Embedding)> {
                let cands =
                    sample_candidates_where(&incumbent, self.cfg.candidates, &self.tr, |p| self.feasible(p), rng)?;
                let (m, adv) = dueling_ts_select(&gp, &incumbent, &cands, rng)?;
                let challenger = cands[m];
                let view_ch = self.view(&challenger)?;
                let verdict = oracle.compare(&Duel {
                    iteration: iter,
                    description: task.description,
                    scene: self.scene,
                    incumbent,
                    challenger,
                    view_incumbent: &view_inc,
                    view_challenger: &view_ch,
                })?;
                Ok((challenger, adv, verdict.sign(), view_ch))
            })();
            let (challenger, advantage, s, view_ch) = match step {
                Ok(v) => v,
                Err(e) => return Err(fail(e, incumbent, trace)),
            };

            let ch_idx = memory.push(challenger);
            memory
                .obs
                .push(PreferenceObservation::new(ch_idx, inc_idx, s).expect("distinct indices and unit sign"));
            gp = match memory.fit(&self.cfg.kernel) {
                Ok(g) => g,
                Err(e) => return Err(fail(e, incumbent, trace)),
            };
            if s > 0 {
                incumbent = challenger;
                inc_idx = ch_idx;
                view_inc = view_ch;
            }
            let sim = match &task.target {
                Some(t) => match cosine(&view_inc, t) {
                    Ok(v) => Some(v),
                    Err(e) => return Err(fail(e, incumbent, trace)),
                },
                None => None,
            };
            trace.push(TraceRecord {
                iter,
                incumbent,
                challenger,
                advantage,
                outcome: s,
                sim,
            });
        }
        Ok(Refined {
            pose: incumbent,
            trace,
            gp,
        })
    }

    /// Refines every task in order. Each waypoint gets its own rng stream
    /// (`cfg.seed` offset by the index) and, unless `share_gp` is set, a
    /// fresh GP. Failures are reported per index and do not stop the rest.
    pub fn refine_all<'o>(
        &self,
        tasks: &[WaypointTask],
        mut oracle_for: impl FnMut(usize, &WaypointTask) -> Box<dyn PreferenceOracle + 'o>,
    ) -> Vec<std::result::Result<Refined, RefineFailure>> {
        let mut shared = GpMemory::default();
        tasks
            .iter()
            .enumerate()
            .map(|(i, task)| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(i as u64));
                let mut oracle = oracle_for(i, task);
                let mut fresh = GpMemory::default();
                let memory = if self.cfg.share_gp { &mut shared } else { &mut fresh };
                self.refine_with(task, oracle.as_mut(), memory, &mut rng)
                    .map_err(|f| RefineFailure { index: i, ..f })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Aabb, Landmark};
    use crate::gp::laplace_fit;
    use crate::oracle::{AlwaysIncumbent, ScriptedOracle, SyntheticOracle, SyntheticUtility, Verdict};
    use proptest::prelude::*;

    fn open_grid() -> VoxelGrid {
        VoxelGrid::new(Vector3::new(-5.0, -5.0, 0.0), 0.25, [40, 40, 12]).unwrap()
    }

    fn scene() -> SyntheticScene {
        let dim = 8;
        let lm = |label: &str, c: [f64; 3], i: usize| Landmark {
            center: Vector3::from(c),
            radius: 0.3,
            label: label.into(),
            semantic: Embedding::basis(dim, i),
        };
        SyntheticScene::new(
            Aabb::new(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(5.0, 5.0, 3.0)).unwrap(),
            1.5,
            vec![
                lm("plant", [3.0, 0.0, 1.0], 0),
                lm("clock", [0.0, 3.0, 1.5], 1),
                lm("chair", [-3.0, -1.0, 0.5], 2),
                lm("lamp", [2.5, 2.5, 1.2], 3),
            ],
        )
        .unwrap()
        .with_ambient(0.05)
        .unwrap()
    }

    fn tr() -> TrustRegion {
        TrustRegion::with_altitude(0.3, 2.7).unwrap()
    }

    fn desc(scene: &SyntheticScene, label: &str) -> WaypointDescription {
        WaypointDescription::new(0, label, scene.landmark(label).unwrap().semantic.clone()).unwrap()
    }

    fn cfg(b: usize, m: usize, seed: u64) -> RefineConfig {
        RefineConfig {
            iterations: b,
            candidates: m,
            seed,
            ..RefineConfig::default()
        }
    }

    #[test]
    fn zero_radii_collapse_onto_incumbent() {
        let inc = Pose4::from_xyz(0.0, 0.0, 1.0, 0.3).unwrap();
        let tr = TrustRegion::new(0.0, 0.0, 0.3, 2.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_candidates(&inc, 10, &tr, &open_grid(), &mut rng).unwrap();
        assert!(c.iter().all(|p| *p == inc));
    }

    #[test]
    fn candidates_stay_in_default_region() {
        let inc = Pose4::from_xyz(0.0, 0.0, 1.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_candidates(&inc, 2000, &tr(), &open_grid(), &mut rng).unwrap();
        for p in c {
            assert!((p.p - inc.p).norm() <= 1.0 + 1e-12);
            assert!(wrap(p.theta - inc.theta).abs() <= PI / 6.0 + 1e-12);
        }
    }

    /// `P(r·u_z > c)` for `r ~ U[0, ρ]`, `u` uniform on the sphere (so
    /// `u_z ~ U[-1, 1]`), `0 < c < ρ`.
    fn tail(c: f64, rho: f64) -> f64 {
        let x = c / rho;
        if x == 0.0 {
            return 0.5;
        }
        0.5 * ((1.0 - x) + x * x.ln())
    }

    #[test]
    fn altitude_clamp_matches_analytic_distribution() {
        let inc = Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let tr = TrustRegion::new(PI / 6.0, 1.0, 0.4, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let z: Vec<f64> = sample_candidates(&inc, n, &tr, &open_grid(), &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.p.z)
            .collect();
        assert!(z.iter().all(|&v| (0.4..=1.5).contains(&v)));
        let frac = |pred: &dyn Fn(f64) -> bool| z.iter().filter(|&&v| pred(v)).count() as f64 / n as f64;
        // point masses at both clamps
        assert!((frac(&|v| v == 1.5) - tail(0.5, 1.0)).abs() < 0.004);
        assert!((frac(&|v| v == 0.4) - tail(0.6, 1.0)).abs() < 0.004);
        // interior CDF
        for c in [-0.5, -0.2, 0.0, 0.1, 0.3, 0.45] {
            let want = if c >= 0.0 { 1.0 - tail(c, 1.0) } else { tail(-c, 1.0) };
            let got = frac(&|v| v - 1.0 <= c);
            assert!((got - want).abs() < 0.006, "c = {c}: {got} vs {want}");
        }
    }

    #[test]
    fn tiny_free_pocket_is_infeasible() {
        // only a 1 mm ball around the incumbent is free: about 0.1 % of draws
        let inc = Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_candidates_where(&inc, 64, &tr(), |p| (p - inc.p).norm() < 1e-3, &mut rng);
        assert!(matches!(r, Err(Error::InfeasibleRegion { requested: 64, found }) if found < 64), "{r:?}");
        let mut g = open_grid();
        g.fill_box(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(5.0, 5.0, 3.0));
        assert!(sample_candidates(&inc, 1, &tr(), &g, &mut rng).is_err());
    }

    #[test]
    fn single_candidate_is_selected() {
        let gp = laplace_fit(&[], &[], &KernelParams::default()).unwrap();
        let inc = Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let c = [Pose4::from_xyz(0.5, 0.0, 1.0, 0.0).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(dueling_ts_select(&gp, &inc, &c, &mut rng).unwrap().0, 0);
    }

    #[test]
    fn fresh_gp_selection_is_reproducible() {
        let gp = laplace_fit(&[], &[], &KernelParams::default()).unwrap();
        let inc = Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = sample_candidates(&inc, 64, &tr(), &open_grid(), &mut rng).unwrap();
        let pick = |seed| dueling_ts_select(&gp, &inc, &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(pick(11), pick(11));
    }

    #[test]
    fn dominant_candidate_wins_thompson_draws() {
        // `good` beats each of four rivals in 135 of 150 duels; mixed
        // outcomes keep the likelihood curved so the posterior tightens
        let params = KernelParams {
            ell_trans: 0.3,
            ..KernelParams::default()
        };
        let good = Pose4::from_xyz(1.0, 0.0, 1.0, 0.0).unwrap();
        let inc = Pose4::from_xyz(-1.0, 0.0, 1.0, 0.0).unwrap();
        let rivals = [
            inc,
            Pose4::from_xyz(-1.0, 1.5, 1.0, 0.0).unwrap(),
            Pose4::from_xyz(-1.0, -1.5, 1.0, 0.0).unwrap(),
            Pose4::from_xyz(-2.0, 0.0, 1.0, 0.0).unwrap(),
        ];
        let mut x = vec![good];
        x.extend_from_slice(&rivals);
        let obs: Vec<_> = (1..=4)
            .flat_map(|j| (0..150).map(move |k| PreferenceObservation::new(0, j, if k % 10 == 0 { -1 } else { 1 }).unwrap()))
            .collect();
        let gp = laplace_fit(&x, &obs, &params).unwrap();
        let cands = vec![rivals[1], good, rivals[2], rivals[3]];
        let (mean, cov) = gp.predict(&cands);
        for m in [0, 2, 3] {
            let sd = (cov[(1, 1)] + cov[(m, m)] - 2.0 * cov[(1, m)]).max(0.0).sqrt();
            assert!(mean[1] - mean[m] >= 5.0 * sd, "m = {m}: {} vs sd {sd}", mean[1] - mean[m]);
        }
        let hits = (0..1000)
            .filter(|&s| dueling_ts_select(&gp, &inc, &cands, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().0 == 1)
            .count();
        assert!(hits >= 990, "{hits}");
    }

    #[test]
    fn always_incumbent_keeps_seed() {
        let (s, g) = (scene(), open_grid());
        let d = desc(&s, "plant");
        let r = Refiner::new(&s, &g, cfg(15, 16, 2), tr()).unwrap();
        let seed = Pose4::from_xyz(0.0, 0.0, 1.0, 0.2).unwrap();
        let out = r
            .refine_pose(
                &WaypointTask {
                    seed,
                    description: &d,
                    target: None,
                },
                &mut AlwaysIncumbent,
            )
            .unwrap();
        assert_eq!(out.pose, seed);
        assert_eq!(out.promotions(), 0);
        assert_eq!(out.trace.len(), 15);
        assert_eq!(out.gp.observations().len(), 15);
    }

    #[test]
    fn single_step_promotion() {
        let (s, g) = (scene(), open_grid());
        let d = desc(&s, "plant");
        let r = Refiner::new(&s, &g, cfg(1, 1, 9), tr()).unwrap();
        let seed = Pose4::from_xyz(0.0, 0.0, 1.0, 0.2).unwrap();
        let task = WaypointTask {
            seed,
            description: &d,
            target: None,
        };
        let out = r.refine_pose(&task, &mut ScriptedOracle::new([Verdict::Challenger])).unwrap();
        // the only candidate is the first feasible draw of the same stream
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let only = sample_candidates_where(&seed, 1, &tr(), |p| r.feasible(p), &mut rng).unwrap()[0];
        assert_eq!(out.pose, only);
        assert_eq!(out.trace[0].challenger, only);
        assert_eq!(out.trace[0].outcome, 1);
    }

    #[test]
    fn oracle_error_returns_partial_trace() {
        let (s, g) = (scene(), open_grid());
        let d = desc(&s, "plant");
        let r = Refiner::new(&s, &g, cfg(10, 8, 0), tr()).unwrap();
        let task = WaypointTask {
            seed: Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap(),
            description: &d,
            target: None,
        };
        let mut oracle = ScriptedOracle::new([Verdict::Incumbent, Verdict::Challenger, Verdict::Incumbent]);
        let f = r.refine_pose(&task, &mut oracle).unwrap_err();
        assert!(matches!(f.error, Error::Oracle(_)));
        assert_eq!(f.partial.len(), 3);
        assert_eq!(f.incumbent, f.partial[1].challenger);
    }

    fn synthetic_run(seed: Pose4, label: &str, b: usize, rng_seed: u64) -> Refined {
        let (s, g) = (scene(), open_grid());
        let d = desc(&s, label);
        let r = Refiner::new(&s, &g, cfg(b, 64, rng_seed), tr()).unwrap();
        let target = d.d.clone();
        let mut oracle = SyntheticOracle::new(SyntheticUtility::new(target.clone(), 0.0).unwrap(), 0);
        r.refine_pose(
            &WaypointTask {
                seed,
                description: &d,
                target: Some(target),
            },
            &mut oracle,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_refinement_reaches_target() {
        // seed 1 m short of a good spot in front of the plant, looking past it
        let seed = Pose4::from_xyz(1.0, 0.6, 1.3, 0.6).unwrap();
        let out = synthetic_run(seed, "plant", 100, 4);
        let last = out.trace.last().unwrap().sim.unwrap();
        assert!(last >= 0.95, "final similarity {last}");
        // incumbent utility never decreases
        for w in out.trace.windows(2) {
            assert!(w[1].sim.unwrap() >= w[0].sim.unwrap());
        }
        assert_eq!(out.gp.observations().len(), 100);
    }

    #[test]
    fn traces_are_bit_identical() {
        let seed = Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let a = synthetic_run(seed, "clock", 20, 3);
        let b = synthetic_run(seed, "clock", 20, 3);
        assert_eq!(trace_csv(&a.trace), trace_csv(&b.trace));
        assert!(trace_csv(&a.trace).starts_with("iter,px,py,pz,theta,adv,outcome,sim\n"));
    }

    #[test]
    fn refine_all_cases() {
        let (s, g) = (scene(), open_grid());
        let r = Refiner::new(&s, &g, cfg(8, 16, 1), tr()).unwrap();
        assert!(r.refine_all(&[], |_, _| Box::new(AlwaysIncumbent)).is_empty());

        let ds: Vec<_> = ["plant", "clock", "lamp"].iter().map(|l| desc(&s, l)).collect();
        let seeds = [
            Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap(),
            Pose4::from_xyz(1.0, 1.0, 1.2, 1.0).unwrap(),
            Pose4::from_xyz(-1.0, 0.5, 0.8, -2.0).unwrap(),
        ];
        let tasks: Vec<_> = seeds
            .iter()
            .zip(&ds)
            .map(|(&seed, d)| WaypointTask {
                seed,
                description: d,
                target: None,
            })
            .collect();
        let out: Vec<Pose4> = r
            .refine_all(&tasks, |_, _| Box::new(AlwaysIncumbent))
            .into_iter()
            .map(|x| x.unwrap().pose)
            .collect();
        assert_eq!(out, seeds);

        // a failing middle waypoint is reported with its index
        let res = r.refine_all(&tasks, |i, _| -> Box<dyn PreferenceOracle> {
            if i == 1 {
                Box::new(ScriptedOracle::new([]))
            } else {
                Box::new(AlwaysIncumbent)
            }
        });
        assert!(res[0].is_ok() && res[2].is_ok());
        assert_eq!(res[1].as_ref().unwrap_err().index, 1);
    }

    #[test]
    fn two_targets_each_improve() {
        let (s, g) = (scene(), open_grid());
        let r = Refiner::new(&s, &g, cfg(40, 32, 6), tr()).unwrap();
        let ds: Vec<_> = ["plant", "clock"].iter().map(|l| desc(&s, l)).collect();
        let seeds = [
            Pose4::from_xyz(0.5, -0.5, 1.0, -0.8).unwrap(),
            Pose4::from_xyz(-0.8, 0.5, 1.0, 0.6).unwrap(),
        ];
        let tasks: Vec<_> = seeds
            .iter()
            .zip(&ds)
            .map(|(&seed, d)| WaypointTask {
                seed,
                description: d,
                target: Some(d.d.clone()),
            })
            .collect();
        let res = r.refine_all(&tasks, |_, t| {
            Box::new(SyntheticOracle::new(SyntheticUtility::new(t.description.d.clone(), 0.0).unwrap(), 0))
        });
        for (task, out) in tasks.iter().zip(res) {
            let out = out.unwrap();
            let before = cosine(&r.view(&task.seed).unwrap(), task.target.as_ref().unwrap()).unwrap();
            let after = out.trace.last().unwrap().sim.unwrap();
            assert!(after > before, "{before} -> {after}");
        }
    }

    #[test]
    fn shared_gp_accumulates() {
        let (s, g) = (scene(), open_grid());
        let mut c = cfg(5, 8, 1);
        c.share_gp = true;
        let r = Refiner::new(&s, &g, c, tr()).unwrap();
        let d = desc(&s, "plant");
        let seed = Pose4::from_xyz(0.0, 0.0, 1.0, 0.0).unwrap();
        let tasks = vec![
            WaypointTask {
                seed,
                description: &d,
                target: None,
            };
            2
        ];
        let res = r.refine_all(&tasks, |_, _| Box::new(AlwaysIncumbent));
        assert_eq!(res[0].as_ref().unwrap().gp.observations().len(), 5);
        assert_eq!(res[1].as_ref().unwrap().gp.observations().len(), 10);
    }

    #[test]
    fn config_validation() {
        assert!(TrustRegion::new(4.0, 1.0, 0.0, 1.0).is_err());
        assert!(TrustRegion::new(0.5, -1.0, 0.0, 1.0).is_err());
        assert!(TrustRegion::new(0.5, 1.0, 2.0, 1.0).is_err());
        assert!(cfg(0, 1, 0).validate().is_err());
        assert!(cfg(1, 0, 0).validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn challengers_lie_in_region_of_their_proposer(seed in 0u64..1000, x in -1.0..1.0f64, th in -3.0..3.0f64) {
            let (s, mut g) = (scene(), open_grid());
            g.fill_box(Vector3::new(0.5, -5.0, 0.0), Vector3::new(0.8, 5.0, 3.0));
            let d = desc(&s, "plant");
            let r = Refiner::new(&s, &g, cfg(12, 8, seed), tr()).unwrap();
            let start = Pose4::from_xyz(x.min(0.2), 0.0, 1.0, th).unwrap();
            let target = d.d.clone();
            let mut oracle = SyntheticOracle::new(SyntheticUtility::new(target.clone(), 0.0).unwrap(), seed);
            let out = r.refine_pose(&WaypointTask { seed: start, description: &d, target: Some(target) }, &mut oracle).unwrap();
            let mut proposer = start;
            let mut last_sim = f64::NEG_INFINITY;
            for rec in &out.trace {
                prop_assert!((rec.challenger.p - proposer.p).norm() <= 1.0 + 1e-9);
                prop_assert!(wrap(rec.challenger.theta - proposer.theta).abs() <= PI / 6.0 + 1e-9);
                prop_assert!(g.is_free_point(&rec.challenger.p));
                let sim = rec.sim.unwrap();
                prop_assert!(sim >= last_sim);
                last_sim = sim;
                proposer = rec.incumbent;
            }
            prop_assert_eq!(out.gp.observations().len(), 12);
        }
    }
}
