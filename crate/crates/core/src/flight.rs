//! The full planning chain from refined poses to control samples.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geom::Pose4;
use crate::plan::{extract_path, grow_corridor, CorridorBox, CorridorOptions, DistanceField, PathOptions, Polyline};
use crate::traj::{
    allocate_times, fit_flight_yaw, fit_position_traj, sample_controls, ControlSample, DynLimits, FitOptions,
    FlightTrajectory, LEAVES_CORRIDOR,
};

/// Extra voxels of longitudinal padding tried, in order, when the fit
/// overshoots the corridor. Flush box ends leave a gap past a sharp turn
/// that inserting interpolation points cannot close.
pub const PADDING_STEPS: [f64; 3] = [0.0, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanParams {
    pub v_max: f64,
    pub a_max: f64,
    pub dt: f64,
    /// Minimum field value along the A* path.
    pub clearance: f64,
    /// Margin kept by the corridor boxes.
    pub delta_safe: f64,
    pub max_halfwidth: f64,
    /// Starting longitudinal padding of the boxes; see [`PADDING_STEPS`].
    pub longitudinal_padding: f64,
    pub shortcut: bool,
}

impl Default for PlanParams {
    fn default() -> Self {
        PlanParams {
            v_max: 1.0,
            a_max: 1.0,
            dt: 0.05,
            clearance: 0.3,
            delta_safe: 0.2,
            max_halfwidth: 1.0,
            longitudinal_padding: 0.0,
            shortcut: true,
        }
    }
}

impl PlanParams {
    pub fn limits(&self) -> crate::Result<DynLimits> {
        DynLimits::new(self.v_max, self.a_max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlightPlan {
    pub polyline: Polyline,
    pub corridor: Vec<CorridorBox>,
    pub knot_times: Vec<f64>,
    pub trajectory: FlightTrajectory,
    pub controls: Vec<ControlSample>,
}

/// A planning error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn at<T>(stage: &'static str, r: crate::Result<T>) -> Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

/// Path, corridor, time allocation, position and yaw fits, then sampling.
pub fn plan_flight(field: &DistanceField, waypoints: &[Pose4], params: &PlanParams) -> Result<FlightPlan, StageError> {
    let limits = at("limits", params.limits())?;
    let positions: Vec<_> = waypoints.iter().map(|w| w.p).collect();
    let polyline = at(
        "extract_path",
        extract_path(
            field,
            &positions,
            params.clearance,
            PathOptions {
                shortcut: params.shortcut,
            },
        ),
    )?;
    let tau = allocate_times(&polyline, limits);
    let opts = FitOptions::new(params.dt, field.resolution());
    let (corridor, position) = fit_in_corridor(field, &polyline, &tau, limits, &opts, params)?;
    let yaws: Vec<f64> = waypoints.iter().map(|w| w.theta).collect();
    let yaw = at("fit_yaw_spline", fit_flight_yaw(&position, &yaws))?;
    let controls = at("sample_controls", sample_controls(&position, &yaw, params.dt))?;
    Ok(FlightPlan {
        polyline,
        corridor,
        knot_times: position.knot_times.clone(),
        trajectory: FlightTrajectory { position, yaw },
        controls,
    })
}

fn overshoots(e: &Error) -> bool {
    matches!(e, Error::TrajectoryInfeasible { reason, .. } if reason == LEAVES_CORRIDOR)
}

/// Grows the corridor and fits the position trajectory, widening the box
/// ends by [`PADDING_STEPS`] while the fit leaves the corridor. Padded boxes
/// pass the same clearance test; a padding that does not fit returns the
/// earlier overshoot error.
fn fit_in_corridor(
    field: &DistanceField,
    polyline: &Polyline,
    tau: &[f64],
    limits: DynLimits,
    opts: &FitOptions,
    params: &PlanParams,
) -> Result<(Vec<CorridorBox>, crate::traj::PiecewisePolyTraj), StageError> {
    if polyline.vertices.len() < 2 {
        let position = at("fit_position_traj", fit_position_traj(polyline, tau, &[], limits, opts))?;
        return Ok((Vec::new(), position));
    }
    let mut last = None;
    for (i, extra) in PADDING_STEPS.iter().enumerate() {
        let corridor_opts = CorridorOptions {
            delta_safe: params.delta_safe,
            max_halfwidth: params.max_halfwidth,
            longitudinal_padding: params.longitudinal_padding + extra * field.resolution(),
        };
        let corridor = match grow_corridor(polyline, field, corridor_opts) {
            Ok(c) => c,
            Err(e) if i == 0 => return Err(StageError { stage: "grow_corridor", error: e }),
            Err(_) => break,
        };
        match fit_position_traj(polyline, tau, &corridor, limits, opts) {
            Ok(position) => return Ok((corridor, position)),
            Err(e) if overshoots(&e) => last = Some(e),
            Err(e) => return Err(StageError { stage: "fit_position_traj", error: e }),
        }
    }
    Err(StageError {
        stage: "fit_position_traj",
        error: last.expect("at least one fit ran"),
    })
}
