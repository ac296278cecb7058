use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use super::distance::DistanceField;
use super::grid::Voxel;
use crate::error::{Error, Result};

/// Voxel path found by [`astar`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub voxels: Vec<Voxel>,
    pub points: Vec<Vector3<f64>>,
    /// Path length in meters, summed per step class so that equal-length paths
    /// report bit-identical costs.
    pub cost: f64,
}

/// Number of unit, face-diagonal and cube-diagonal moves along a path.
pub fn step_counts(voxels: &[Voxel]) -> [u32; 3] {
    let mut counts = [0u32; 3];
    for w in voxels.windows(2) {
        let changed = (0..3).filter(|&a| w[0][a] != w[1][a]).count();
        if changed > 0 {
            counts[changed - 1] += 1;
        }
    }
    counts
}

/// Canonical length of a step-count triple at the given resolution.
pub fn counts_cost(counts: [u32; 3], resolution: f64) -> f64 {
    resolution * (counts[0] as f64 + counts[1] as f64 * 2f64.sqrt() + counts[2] as f64 * 3f64.sqrt())
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then prefer larger g, then lower index
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Whether a voxel may be traversed at the given clearance.
pub fn traversable(field: &DistanceField, index: usize, clearance: f64) -> bool {
    let d = field.at_index(index);
    d > 0.0 && d >= clearance
}

fn endpoint(field: &DistanceField, p: &Vector3<f64>, clearance: f64, what: &str) -> Result<Voxel> {
    let grid = field.grid();
    let v = grid
        .voxel_of(p)
        .ok_or_else(|| Error::InvalidEndpoint(format!("{what} [{:.3}, {:.3}, {:.3}] is outside the map", p.x, p.y, p.z)))?;
    let idx = grid.index(v);
    if grid.occupied_at(idx) {
        return Err(Error::InvalidEndpoint(format!(
            "{what} [{:.3}, {:.3}, {:.3}] is inside an occupied voxel",
            p.x, p.y, p.z
        )));
    }
    if !traversable(field, idx, clearance) {
        return Err(Error::InvalidEndpoint(format!(
            "{what} [{:.3}, {:.3}, {:.3}] has clearance {:.3} m < {clearance:.3} m",
            p.x,
            p.y,
            p.z,
            field.at_index(idx)
        )));
    }
    Ok(v)
}

/// Shortest 26-connected voxel path from `start` to `goal` through voxels
/// whose distance-field value is at least `clearance`. Edge costs are the
/// Euclidean distances between voxel centers; the heuristic is the straight
/// line distance, so the result is optimal.
pub fn astar(field: &DistanceField, start: &Vector3<f64>, goal: &Vector3<f64>, clearance: f64) -> Result<GridPath> {
    let grid = field.grid();
    let s = endpoint(field, start, clearance, "start")?;
    let g = endpoint(field, goal, clearance, "goal")?;
    let res = grid.resolution();
    let [nx, ny, nz] = grid.dims();
    let goal_center = grid.center(g);
    let h = |v: Voxel| (grid.center(v) - goal_center).norm();

    let n = grid.len();
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let si = grid.index(s);
    let gi = grid.index(g);
    best[si] = 0.0;
    let mut open = BinaryHeap::new();
    open.push(Open { f: h(s), g: 0.0, index: si });

    let step_len = [res, res * 2f64.sqrt(), res * 3f64.sqrt()];

    while let Some(Open { g: gc, index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == gi {
            break;
        }
        let [i, j, k] = grid.voxel(index);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let (a, b, c) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                    if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                        continue;
                    }
                    let nv = [a as usize, b as usize, c as usize];
                    let ni = grid.index(nv);
                    if closed[ni] || !traversable(field, ni, clearance) {
                        continue;
                    }
                    let class = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    let ng = gc + step_len[class - 1];
                    if ng < best[ni] {
                        best[ni] = ng;
                        parent[ni] = index;
                        open.push(Open { f: ng + h(nv), g: ng, index: ni });
                    }
                }
            }
        }
    }

    if !closed[gi] {
        return Err(Error::Unreachable { leg: 0 });
    }
    let mut voxels = vec![g];
    let mut cur = gi;
    while cur != si {
        cur = parent[cur];
        voxels.push(grid.voxel(cur));
    }
    voxels.reverse();
    let points = voxels.iter().map(|&v| grid.center(v)).collect();
    let cost = counts_cost(step_counts(&voxels), res);
    Ok(GridPath { voxels, points, cost })
}
