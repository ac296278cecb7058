use nalgebra::Vector3;

use super::grid::{Voxel, VoxelGrid};

/// Per-voxel Euclidean distance (meters, voxel-center metric) to the nearest
/// occupied voxel. Cells outside the grid count as occupied.
#[derive(Debug, Clone)]
pub struct DistanceField {
    grid: VoxelGrid,
    dist: Vec<f64>,
}

// Large finite stand-in for +∞ so parabola intersections stay finite.
const FAR: f64 = 1e20;

impl DistanceField {
    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }

    pub fn at_voxel(&self, v: Voxel) -> f64 {
        self.dist[self.grid.index(v)]
    }

    pub fn at_index(&self, index: usize) -> f64 {
        self.dist[index]
    }

    /// Value of the voxel containing `p`; zero outside the grid.
    pub fn at(&self, p: &Vector3<f64>) -> f64 {
        self.grid.voxel_of(p).map_or(0.0, |v| self.at_voxel(v))
    }
}

/// Exact squared EDT along one line (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                // z[0] is -inf, so k never underflows here
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Separable exact Euclidean distance transform.
pub fn distance_transform(grid: &VoxelGrid) -> DistanceField {
    let [nx, ny, nz] = grid.dims();
    // One-voxel occupied border implements the out-of-bounds rule.
    let (px, py, pz) = (nx + 2, ny + 2, nz + 2);
    let pidx = |i: usize, j: usize, k: usize| i + px * (j + py * k);
    let mut sq = vec![0.0; px * py * pz];
    for k in 0..pz {
        for j in 0..py {
            for i in 0..px {
                let border = i == 0 || j == 0 || k == 0 || i == px - 1 || j == py - 1 || k == pz - 1;
                let occ = border || grid.is_occupied([i - 1, j - 1, k - 1]);
                sq[pidx(i, j, k)] = if occ { 0.0 } else { FAR };
            }
        }
    }

    let longest = px.max(py).max(pz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];

    for k in 0..pz {
        for j in 0..py {
            for i in 0..px {
                line[i] = sq[pidx(i, j, k)];
            }
            edt_1d(&line[..px], &mut out[..px], &mut v, &mut z);
            for i in 0..px {
                sq[pidx(i, j, k)] = out[i];
            }
        }
    }
    for k in 0..pz {
        for i in 0..px {
            for j in 0..py {
                line[j] = sq[pidx(i, j, k)];
            }
            edt_1d(&line[..py], &mut out[..py], &mut v, &mut z);
            for j in 0..py {
                sq[pidx(i, j, k)] = out[j];
            }
        }
    }
    for j in 0..py {
        for i in 0..px {
            for k in 0..pz {
                line[k] = sq[pidx(i, j, k)];
            }
            edt_1d(&line[..pz], &mut out[..pz], &mut v, &mut z);
            for k in 0..pz {
                sq[pidx(i, j, k)] = out[k];
            }
        }
    }

    let res = grid.resolution();
    let mut dist = vec![0.0; grid.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index([i, j, k]);
                dist[idx] = if grid.occupied_at(idx) {
                    0.0
                } else {
                    sq[pidx(i + 1, j + 1, k + 1)].sqrt() * res
                };
            }
        }
    }
    DistanceField { grid: grid.clone(), dist }
}
