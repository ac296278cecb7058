use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::distance::DistanceField;
use super::path::Polyline;
use crate::error::{Error, Result};

/// Slack on the box inequalities, absorbing rounding at shared faces.
pub const CONTAINS_TOL: f64 = 1e-9;

/// Oriented box around one polyline segment. Local coordinates are taken in
/// the frame `(n, b, t)`; `half_extents` is `(w/2, h/2, Δ/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorBox {
    pub center: Vector3<f64>,
    pub t: Vector3<f64>,
    pub n: Vector3<f64>,
    pub b: Vector3<f64>,
    pub half_extents: Vector3<f64>,
}

impl CorridorBox {
    pub fn local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = p - self.center;
        Vector3::new(d.dot(&self.n), d.dot(&self.b), d.dot(&self.t))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let l = self.local(p);
        (0..3).all(|a| l[a].abs() <= self.half_extents[a] + CONTAINS_TOL)
    }

    pub fn world(&self, xn: f64, xb: f64, xt: f64) -> Vector3<f64> {
        self.center + self.n * xn + self.b * xb + self.t * xt
    }
}

/// Whether any box contains `p`.
pub fn corridor_contains(boxes: &[CorridorBox], p: &Vector3<f64>) -> bool {
    boxes.iter().any(|b| b.contains(p))
}

#[derive(Debug, Clone, Copy)]
pub struct CorridorOptions {
    pub delta_safe: f64,
    pub max_halfwidth: f64,
    /// Extra length added to each end of every box along its segment.
    pub longitudinal_padding: f64,
}

/// Deterministic orthonormal completion of a unit tangent.
pub fn frame_for(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let z = Vector3::z();
    let cross = t.cross(&z);
    let n = if cross.norm() > 1e-9 {
        cross.normalize()
    } else {
        t.cross(&Vector3::x()).normalize()
    };
    let b = t.cross(&n);
    (n, b)
}

/// Sample offsets along one axis: multiples of `pitch` in `(lo, hi]` (and
/// their negatives), plus `±hi` itself. With `lo < 0` the zero layer is
/// included.
fn layer_offsets(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 0i64;
    loop {
        let o = j as f64 * pitch;
        if o > hi + 1e-12 {
            break;
        }
        if o > lo + 1e-12 {
            out.push(o);
            if o != 0.0 {
                out.push(-o);
            }
        }
        j += 1;
    }
    if hi > lo + 1e-12 && out.iter().all(|&o| (o - hi).abs() > 1e-12) {
        out.push(hi);
        if hi != 0.0 {
            out.push(-hi);
        }
    }
    out
}

/// The lattice used to certify a box: half-voxel pitch on every axis,
/// always including the faces.
pub fn box_samples(bx: &CorridorBox, pitch: f64) -> Vec<Vector3<f64>> {
    let ns = layer_offsets(-1.0, bx.half_extents[0], pitch);
    let bs = layer_offsets(-1.0, bx.half_extents[1], pitch);
    let ts = layer_offsets(-1.0, bx.half_extents[2], pitch);
    let mut pts = Vec::with_capacity(ns.len() * bs.len() * ts.len());
    for &xn in &ns {
        for &xb in &bs {
            for &xt in &ts {
                pts.push(bx.world(xn, xb, xt));
            }
        }
    }
    pts
}

fn all_safe(field: &DistanceField, bx: &CorridorBox, ns: &[f64], bs: &[f64], ts: &[f64], delta_safe: f64) -> bool {
    ns.iter().all(|&xn| {
        bs.iter().all(|&xb| {
            ts.iter().all(|&xt| {
                let d = field.at(&bx.world(xn, xb, xt));
                d > 0.0 && d >= delta_safe
            })
        })
    })
}

/// Grows one rectangular tunnel box per polyline segment.
///
/// Boxes start one voxel wide and widen symmetrically by one voxel per side
/// per step, alternating the `n` and `b` directions, while every new sample
/// (half-voxel pitch) keeps field value ≥ `delta_safe`. Growth stops at
/// `max_halfwidth`.
pub fn grow_corridor(polyline: &Polyline, field: &DistanceField, opts: CorridorOptions) -> Result<Vec<CorridorBox>> {
    let res = field.resolution();
    let pitch = 0.5 * res;
    if opts.max_halfwidth < pitch {
        return Err(Error::InvalidArgument(format!(
            "max half-width {} is below half a voxel ({pitch})",
            opts.max_halfwidth
        )));
    }
    let mut boxes = Vec::with_capacity(polyline.vertices.len().saturating_sub(1));
    for (segment, (a, c)) in polyline.segments().enumerate() {
        let d = c - a;
        let len = d.norm();
        if len == 0.0 {
            return Err(Error::InvalidArgument(format!("segment {segment} has zero length")));
        }
        let t = d / len;
        let (n, b) = frame_for(&t);
        let mut bx = CorridorBox {
            center: a + d * 0.5,
            t,
            n,
            b,
            half_extents: Vector3::new(pitch, pitch, 0.5 * len + opts.longitudinal_padding),
        };
        let ts = layer_offsets(-1.0, bx.half_extents[2], pitch);
        let initial = layer_offsets(-1.0, pitch, pitch);
        if !all_safe(field, &bx, &initial, &initial, &ts, opts.delta_safe) {
            return Err(Error::CorridorInfeasible { segment });
        }
        let mut open = [true, true];
        while open[0] || open[1] {
            for axis in 0..2 {
                if !open[axis] {
                    continue;
                }
                let cur = bx.half_extents[axis];
                let next = (cur + res).min(opts.max_halfwidth);
                if next <= cur {
                    open[axis] = false;
                    continue;
                }
                let slab = layer_offsets(cur, next, pitch);
                let other = layer_offsets(-1.0, bx.half_extents[1 - axis], pitch);
                let ok = if axis == 0 {
                    all_safe(field, &bx, &slab, &other, &ts, opts.delta_safe)
                } else {
                    all_safe(field, &bx, &other, &slab, &ts, opts.delta_safe)
                };
                if ok {
                    bx.half_extents[axis] = next;
                } else {
                    open[axis] = false;
                }
            }
        }
        boxes.push(bx);
    }
    Ok(boxes)
}
