//! Time allocation, corridor-verified minimum-snap position trajectories,
//! yaw splines and discretized controls.

mod poly;
mod yaw;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::wrap;
use crate::plan::{corridor_contains, CorridorBox, Polyline};

pub use poly::{min_snap, PiecewisePolyTraj, PolySegment, DEGREE};
pub use yaw::{fit_yaw_spline, fit_yaw_spline_with, unwrap_yaw, EndCondition, YawSpline};

/// Duration given to a leg whose endpoints coincide.
pub const ZERO_LEG_DURATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynLimits {
    pub v_max: f64,
    pub a_max: f64,
}

impl DynLimits {
    pub fn new(v_max: f64, a_max: f64) -> Result<Self> {
        if !(v_max > 0.0 && a_max > 0.0 && v_max.is_finite() && a_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("limits must be positive, got v={v_max}, a={a_max}")));
        }
        Ok(DynLimits { v_max, a_max })
    }
}

/// Rest-to-rest duration of a trapezoidal speed profile over length `len`
/// (triangular when cruise speed is never reached).
pub fn trapezoid_duration(len: f64, limits: DynLimits) -> f64 {
    let DynLimits { v_max: v, a_max: a } = limits;
    if len >= v * v / a {
        len / v + v / a
    } else {
        2.0 * (len / a).sqrt()
    }
}

/// Time at which the trapezoidal profile over `len` reaches arc length `s`.
fn profile_time(s: f64, len: f64, limits: DynLimits) -> f64 {
    let DynLimits { v_max: v, a_max: a } = limits;
    let total = trapezoid_duration(len, limits);
    let ramp = if len >= v * v / a { 0.5 * v * v / a } else { 0.5 * len };
    if s <= ramp {
        (2.0 * s / a).sqrt()
    } else if s <= len - ramp {
        v / a + (s - ramp) / v
    } else {
        total - (2.0 * (len - s).max(0.0) / a).sqrt()
    }
}

/// Waypoint times `τ_k`: `τ_0 = 0`, then one trapezoidal leg per pair of
/// consecutive waypoints, measured along the polyline.
pub fn allocate_times(polyline: &Polyline, limits: DynLimits) -> Vec<f64> {
    let arcs = polyline.waypoint_arcs();
    let mut tau = Vec::with_capacity(arcs.len());
    let mut t = 0.0;
    for (k, s) in arcs.iter().enumerate() {
        if k > 0 {
            let len = s - arcs[k - 1];
            let d = if len > 0.0 {
                trapezoid_duration(len, limits)
            } else {
                warn!("leg {} has zero length; giving it {ZERO_LEG_DURATION} s", k - 1);
                ZERO_LEG_DURATION
            };
            t += d;
        }
        tau.push(t);
    }
    tau
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Control sampling period; verification also checks its multiples.
    pub dt: f64,
    /// Map resolution, which bounds the verification step.
    pub resolution: f64,
    pub corridor_rounds: usize,
    pub limit_rounds: usize,
    pub limit_slack: f64,
    pub time_scale_step: f64,
}

impl FitOptions {
    pub fn new(dt: f64, resolution: f64) -> Self {
        FitOptions {
            dt,
            resolution,
            corridor_rounds: 5,
            limit_rounds: 5,
            limit_slack: 1.05,
            time_scale_step: 1.2,
        }
    }
}

/// Times `0, dt, 2dt, …` strictly before `t_end`, then `t_end` itself.
pub fn sample_times(t_end: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt;
        if t >= t_end - 1e-9 * dt {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(t_end);
    out
}

/// Times at which a fitted trajectory is checked.
pub fn verification_times(traj: &PiecewisePolyTraj, limits: DynLimits, opts: &FitOptions) -> Vec<f64> {
    let t_end = traj.duration();
    let step = opts.dt.min(opts.resolution / (2.0 * limits.v_max));
    let mut times = sample_times(t_end, step);
    times.extend(sample_times(t_end, opts.dt));
    times.extend_from_slice(&traj.breaks);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

struct Check {
    corridor_fail: Vec<f64>,
    first_corridor: Option<(f64, Vector3<f64>)>,
    first_limit: Option<(f64, Vector3<f64>, String)>,
}

fn check(traj: &PiecewisePolyTraj, corridor: &[CorridorBox], limits: DynLimits, opts: &FitOptions) -> Check {
    let mut out = Check {
        corridor_fail: Vec::new(),
        first_corridor: None,
        first_limit: None,
    };
    for t in verification_times(traj, limits, opts) {
        let p = traj.position(t);
        if !corridor.is_empty() && !corridor_contains(corridor, &p) {
            out.corridor_fail.push(t);
            out.first_corridor.get_or_insert((t, p));
        }
        if out.first_limit.is_none() {
            let v = traj.velocity(t).norm();
            let a = traj.acceleration(t).norm();
            if v > opts.limit_slack * limits.v_max {
                out.first_limit = Some((t, p, format!("speed {v:.4} m/s exceeds {:.4}", opts.limit_slack * limits.v_max)));
            } else if a > opts.limit_slack * limits.a_max {
                out.first_limit = Some((t, p, format!("acceleration {a:.4} m/s² exceeds {:.4}", opts.limit_slack * limits.a_max)));
            }
        }
    }
    out
}

/// Fits a minimum-snap trajectory through the polyline's waypoints at the
/// times `tau` and verifies it against the corridor and limits.
///
/// Interior polyline vertices are interpolated too, at the times the
/// trapezoidal profile of their leg reaches them. A corridor violation
/// inserts the polyline point at mid arc length of each offending interval;
/// a limit violation stretches all durations by `time_scale_step`.
pub fn fit_position_traj(
    polyline: &Polyline,
    tau: &[f64],
    corridor: &[CorridorBox],
    limits: DynLimits,
    opts: &FitOptions,
) -> Result<PiecewisePolyTraj> {
    let marks = &polyline.waypoint_marks;
    if tau.len() != marks.len() {
        return Err(Error::InvalidArgument(format!("{} knot times for {} waypoints", tau.len(), marks.len())));
    }
    if marks.is_empty() {
        return Err(Error::InvalidArgument("no waypoints".into()));
    }
    if marks.len() == 1 {
        return Ok(PiecewisePolyTraj::stationary(polyline.vertices[marks[0]]));
    }
    if tau[0] != 0.0 || tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("knot times must start at 0 and increase strictly".into()));
    }
    let arcs = polyline.arc_lengths();

    let mut pts: Vec<Node> = vec![Node {
        arc: arcs[marks[0]],
        t: 0.0,
        p: polyline.vertices[marks[0]],
        waypoint: true,
    }];
    for k in 1..marks.len() {
        let (m0, m1) = (marks[k - 1], marks[k]);
        let len = arcs[m1] - arcs[m0];
        let span = tau[k] - tau[k - 1];
        if len > 0.0 {
            let profile_total = trapezoid_duration(len, limits);
            for v in m0 + 1..m1 {
                let s = arcs[v] - arcs[m0];
                pts.push(Node {
                    arc: arcs[v],
                    t: tau[k - 1] + span * profile_time(s, len, limits) / profile_total,
                    p: polyline.vertices[v],
                    waypoint: false,
                });
            }
        }
        pts.push(Node {
            arc: arcs[m1],
            t: tau[k],
            p: polyline.vertices[m1],
            waypoint: true,
        });
    }

    let mut corridor_left = opts.corridor_rounds;
    let mut limit_left = opts.limit_rounds;
    loop {
        let positions: Vec<Vector3<f64>> = pts.iter().map(|n| n.p).collect();
        let times: Vec<f64> = pts.iter().map(|n| n.t).collect();
        let mut traj = min_snap(&positions, &times)?;
        traj.knot_times = pts.iter().filter(|n| n.waypoint).map(|n| n.t).collect();

        let c = check(&traj, corridor, limits, opts);
        if let Some((t, p)) = c.first_corridor {
            if corridor_left == 0 {
                return Err(Error::TrajectoryInfeasible {
                    t,
                    position: p,
                    reason: LEAVES_CORRIDOR.into(),
                });
            }
            corridor_left -= 1;
            let mut bad: Vec<usize> = c.corridor_fail.iter().map(|&t| traj.segment_index(t)).collect();
            bad.sort_unstable();
            bad.dedup();
            for &i in bad.iter().rev() {
                let arc = 0.5 * (pts[i].arc + pts[i + 1].arc);
                let node = Node {
                    arc,
                    t: 0.5 * (pts[i].t + pts[i + 1].t),
                    p: polyline.point_at(arc),
                    waypoint: false,
                };
                pts.insert(i + 1, node);
            }
            continue;
        }
        if let Some((t, p, reason)) = c.first_limit {
            if limit_left == 0 {
                return Err(Error::TrajectoryInfeasible { t, position: p, reason });
            }
            limit_left -= 1;
            for n in &mut pts {
                n.t *= opts.time_scale_step;
            }
            continue;
        }
        return Ok(traj);
    }
}

/// Failure reason when refinement rounds cannot keep samples in the corridor.
pub const LEAVES_CORRIDOR: &str = "sample leaves the corridor";

/// Interpolation point of the position fit.
struct Node {
    arc: f64,
    t: f64,
    p: Vector3<f64>,
    waypoint: bool,
}

/// One discretized control record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub t: f64,
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub a: [f64; 3],
    /// Wrapped to `(-π, π]`.
    pub theta: f64,
    pub theta_dot: f64,
}

/// Position trajectory plus yaw spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightTrajectory {
    pub position: PiecewisePolyTraj,
    pub yaw: YawSpline,
}

/// Fits the yaw spline through `yaws` (wrapped, one per waypoint) at the
/// trajectory's knot times. A single knot gives a constant yaw.
pub fn fit_flight_yaw(position: &PiecewisePolyTraj, yaws: &[f64]) -> Result<YawSpline> {
    if yaws.len() != position.knot_times.len() {
        return Err(Error::InvalidArgument(format!(
            "{} yaw targets for {} knots",
            yaws.len(),
            position.knot_times.len()
        )));
    }
    let unwrapped = unwrap_yaw(yaws);
    match fit_yaw_spline(&position.knot_times, &unwrapped) {
        Err(Error::DegenerateSpline(1)) => Ok(YawSpline::constant(position.knot_times[0], unwrapped[0])),
        other => other,
    }
}

/// Samples at `0, dt, …` and exactly at the end time.
pub fn sample_controls(pos: &PiecewisePolyTraj, yaw: &YawSpline, dt: f64) -> Result<Vec<ControlSample>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let t_end = pos.duration();
    let times = if t_end == 0.0 { vec![0.0] } else { sample_times(t_end, dt) };
    Ok(times
        .into_iter()
        .map(|t| ControlSample {
            t,
            p: pos.position(t).into(),
            v: pos.velocity(t).into(),
            a: pos.acceleration(t).into(),
            theta: wrap(yaw.eval(t, 0)),
            theta_dot: yaw.eval(t, 1),
        })
        .collect())
}

#[derive(Serialize)]
struct ControlsDoc<'a> {
    dt: f64,
    samples: &'a [ControlSample],
}

pub fn controls_to_json(dt: f64, samples: &[ControlSample]) -> String {
    serde_json::to_string_pretty(&ControlsDoc { dt, samples }).expect("controls serialize")
}

pub fn controls_to_csv(samples: &[ControlSample]) -> String {
    let mut out = String::from("t,px,py,pz,vx,vy,vz,ax,ay,az,theta,theta_dot\n");
    for s in samples {
        let cols: Vec<String> = std::iter::once(s.t)
            .chain(s.p)
            .chain(s.v)
            .chain(s.a)
            .chain([s.theta, s.theta_dot])
            .map(|x| x.to_string())
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}
