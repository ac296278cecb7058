use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::astar::astar;
use super::distance::DistanceField;
use crate::error::{Error, Result};

/// Collision-free polyline visiting the waypoints in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<Vector3<f64>>,
    /// Vertex index of each waypoint, in waypoint order.
    pub waypoint_marks: Vec<usize>,
}

impl Polyline {
    /// Cumulative arc length at every vertex.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.vertices.len());
        let mut acc = 0.0;
        for (i, v) in self.vertices.iter().enumerate() {
            if i > 0 {
                acc += (v - self.vertices[i - 1]).norm();
            }
            s.push(acc);
        }
        s
    }

    pub fn length(&self) -> f64 {
        self.arc_lengths().last().copied().unwrap_or(0.0)
    }

    /// Arc length of every waypoint mark.
    pub fn waypoint_arcs(&self) -> Vec<f64> {
        let s = self.arc_lengths();
        self.waypoint_marks.iter().map(|&m| s[m]).collect()
    }

    /// Point at arc length `s` (clamped to the polyline).
    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        let arcs = self.arc_lengths();
        if self.vertices.len() == 1 || s <= 0.0 {
            return self.vertices[0];
        }
        for i in 1..self.vertices.len() {
            if s <= arcs[i] {
                let seg = arcs[i] - arcs[i - 1];
                let u = if seg > 0.0 { (s - arcs[i - 1]) / seg } else { 0.0 };
                return self.vertices[i - 1] + (self.vertices[i] - self.vertices[i - 1]) * u;
            }
        }
        *self.vertices.last().expect("nonempty")
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vector3<f64>, Vector3<f64>)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PathOptions {
    /// Replace runs of voxel steps by straight chords that keep clearance.
    pub shortcut: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { shortcut: true }
    }
}

/// Every point of the segment, sampled at a quarter voxel, has field value
/// at least `clearance`.
pub fn segment_clear(field: &DistanceField, a: &Vector3<f64>, b: &Vector3<f64>, clearance: f64) -> bool {
    let len = (b - a).norm();
    let step = 0.25 * field.resolution();
    let n = ((len / step).ceil() as usize).max(1);
    (0..=n).all(|i| {
        let p = a + (b - a) * (i as f64 / n as f64);
        let d = field.at(&p);
        d > 0.0 && d >= clearance
    })
}

fn shortcut(field: &DistanceField, pts: &[Vector3<f64>], clearance: f64) -> Vec<Vector3<f64>> {
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && !segment_clear(field, &pts[i], &pts[j], clearance) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Connects the waypoint positions in order with A* legs.
///
/// Each leg starts and ends exactly at the waypoint positions; the voxel
/// centers of the start and goal voxels are dropped in favor of them.
pub fn extract_path(field: &DistanceField, waypoints: &[Vector3<f64>], clearance: f64, opts: PathOptions) -> Result<Polyline> {
    if waypoints.is_empty() {
        return Err(Error::InvalidArgument("no waypoints to connect".into()));
    }
    let mut vertices: Vec<Vector3<f64>> = vec![waypoints[0]];
    let mut marks = vec![0];
    if waypoints.len() == 1 {
        astar(field, &waypoints[0], &waypoints[0], clearance)?;
    }
    for (leg, pair) in waypoints.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let path = astar(field, &a, &b, clearance).map_err(|e| match e {
            Error::Unreachable { .. } => Error::Unreachable { leg },
            other => other,
        })?;
        let mut pts = vec![a];
        if path.points.len() > 2 {
            pts.extend_from_slice(&path.points[1..path.points.len() - 1]);
        }
        pts.push(b);
        let mut pts = if opts.shortcut { shortcut(field, &pts, clearance) } else { pts };
        // drop exact repeats inside the leg (e.g. a waypoint on a voxel center)
        pts.dedup_by(|x, y| (*x - *y).norm() == 0.0);
        for p in pts.into_iter().skip(1) {
            if (p - *vertices.last().expect("nonempty")).norm() > 0.0 {
                vertices.push(p);
            }
        }
        marks.push(vertices.len() - 1);
    }
    Ok(Polyline {
        vertices,
        waypoint_marks: marks,
    })
}
