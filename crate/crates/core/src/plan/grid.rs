use std::path::Path;

use base64::Engine;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::embed::Aabb;
use crate::error::{Error, Result};

/// Integer voxel coordinate.
pub type Voxel = [usize; 3];

/// Occupancy map on a regular grid. Voxel `(i, j, k)` covers
/// `origin + [i, i+1) × res` on x (likewise y, z); its center sits at
/// `origin + (i + ½)·res`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vector3<f64>,
    resolution: f64,
    dims: [usize; 3],
    occupied: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    origin: [f64; 3],
    resolution: f64,
    dims: [usize; 3],
    /// Base64 of the LSB-first bit-packed occupancy, x fastest then y then z.
    occupancy: String,
}

impl VoxelGrid {
    /// All-free grid.
    pub fn new(origin: Vector3<f64>, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        Self::from_occupancy(origin, resolution, dims, vec![false; dims.iter().product()])
    }

    pub fn from_occupancy(origin: Vector3<f64>, resolution: f64, dims: [usize; 3], occupied: Vec<bool>) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidArgument(format!("resolution {resolution} must be > 0")));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("grid dims {dims:?} must be positive")));
        }
        if occupied.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidData(format!(
                "occupancy has {} cells, dims {dims:?} need {}",
                occupied.len(),
                dims.iter().product::<usize>()
            )));
        }
        Ok(VoxelGrid { origin, resolution, dims, occupied })
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn index(&self, v: Voxel) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    pub fn voxel(&self, index: usize) -> Voxel {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn bounds(&self) -> Aabb {
        let size = Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution;
        Aabb {
            min: self.origin,
            max: self.origin + size,
        }
    }

    pub fn center(&self, v: Voxel) -> Vector3<f64> {
        self.origin + Vector3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5) * self.resolution
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<Voxel> {
        let mut v = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            v[a] = f as usize;
        }
        Some(v)
    }

    pub fn is_occupied(&self, v: Voxel) -> bool {
        self.occupied[self.index(v)]
    }

    pub fn occupied_at(&self, index: usize) -> bool {
        self.occupied[index]
    }

    pub fn set_occupied(&mut self, v: Voxel, occupied: bool) {
        let i = self.index(v);
        self.occupied[i] = occupied;
    }

    /// True when `p` lies inside the grid in a free voxel.
    pub fn is_free_point(&self, p: &Vector3<f64>) -> bool {
        self.voxel_of(p).is_some_and(|v| !self.is_occupied(v))
    }

    /// Marks every voxel whose center lies in `[min, max]`.
    pub fn fill_box(&mut self, min: Vector3<f64>, max: Vector3<f64>) {
        for idx in 0..self.len() {
            let c = self.center(self.voxel(idx));
            if (0..3).all(|a| c[a] >= min[a] && c[a] <= max[a]) {
                self.occupied[idx] = true;
            }
        }
    }

    /// Whether the straight line from `from` to `to`, stopping `trim` meters
    /// short of `to`, crosses an occupied voxel.
    pub fn segment_blocked(&self, from: &Vector3<f64>, to: &Vector3<f64>, trim: f64) -> bool {
        let d = to - from;
        let len = d.norm() - trim;
        if len <= 0.0 {
            return false;
        }
        let dir = d.normalize();
        let step = 0.5 * self.resolution;
        let n = (len / step).ceil() as usize;
        (0..=n).any(|i| {
            let p = from + dir * (len * i as f64 / n.max(1) as f64);
            self.voxel_of(&p).is_some_and(|v| self.is_occupied(v))
        })
    }

    pub fn to_json(&self) -> String {
        let mut bytes = vec![0u8; self.len().div_ceil(8)];
        for (i, &o) in self.occupied.iter().enumerate() {
            if o {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        let file = GridFile {
            origin: self.origin.into(),
            resolution: self.resolution,
            dims: self.dims,
            occupancy: base64::engine::general_purpose::STANDARD.encode(bytes),
        };
        serde_json::to_string_pretty(&file).expect("grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            record: e.line(),
            message: e.to_string(),
        })?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(file.occupancy.trim())
            .map_err(|e| Error::InvalidData(format!("occupancy is not valid base64: {e}")))?;
        let n: usize = file.dims.iter().product();
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::InvalidData(format!(
                "occupancy has {} bytes, dims {:?} need {}",
                bytes.len(),
                file.dims,
                n.div_ceil(8)
            )));
        }
        let occupied = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Self::from_occupancy(Vector3::from(file.origin), file.resolution, file.dims, occupied)
    }

    /// Hand-editable text format.
    ///
    /// ```text
    /// ; comment
    /// origin 0 0 0
    /// resolution 0.25
    ///
    /// ..#..      <- z = 0, y = 0 (x grows to the right)
    /// ..#..      <- z = 0, y = 1
    ///
    /// .....      <- z = 1, y = 0
    /// .....
    /// ```
    ///
    /// Blank lines separate z slices. `#` is occupied, `.` free.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let mut origin = Vector3::zeros();
        let mut resolution = 1.0;
        let mut slices: Vec<Vec<Vec<bool>>> = Vec::new();
        let mut current: Vec<Vec<bool>> = Vec::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with(';') {
                continue;
            }
            if line.is_empty() {
                if !current.is_empty() {
                    slices.push(std::mem::take(&mut current));
                }
                continue;
            }
            let bad = |m: &str| Error::Parse {
                record: line_no + 1,
                message: m.to_string(),
            };
            if let Some(rest) = line.strip_prefix("origin") {
                let vals: Vec<f64> = rest
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("origin needs three numbers"))?;
                if vals.len() != 3 {
                    return Err(bad("origin needs three numbers"));
                }
                origin = Vector3::new(vals[0], vals[1], vals[2]);
            } else if let Some(rest) = line.strip_prefix("resolution") {
                resolution = rest.trim().parse().map_err(|_| bad("resolution needs a number"))?;
            } else {
                let row = line
                    .chars()
                    .map(|c| match c {
                        '#' => Ok(true),
                        '.' => Ok(false),
                        other => Err(bad(&format!("unexpected character {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()?;
                if let Some(first) = current.first().or_else(|| slices.first().and_then(|s| s.first())) {
                    if first.len() != row.len() {
                        return Err(bad("row length differs from the first row"));
                    }
                }
                current.push(row);
            }
        }
        if !current.is_empty() {
            slices.push(current);
        }
        let nz = slices.len();
        let ny = slices.first().map_or(0, |s| s.len());
        let nx = slices.first().and_then(|s| s.first()).map_or(0, |r| r.len());
        if slices.iter().any(|s| s.len() != ny) {
            return Err(Error::InvalidData("every z slice needs the same number of rows".into()));
        }
        let mut occupied = vec![false; nx * ny * nz];
        for (k, slice) in slices.iter().enumerate() {
            for (j, row) in slice.iter().enumerate() {
                for (i, &o) in row.iter().enumerate() {
                    occupied[i + nx * (j + ny * k)] = o;
                }
            }
        }
        Self::from_occupancy(origin, resolution, [nx, ny, nz], occupied)
    }

    pub fn to_ascii(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let mut out = format!(
            "origin {} {} {}\nresolution {}\n",
            self.origin.x, self.origin.y, self.origin.z, self.resolution
        );
        for k in 0..nz {
            out.push('\n');
            for j in 0..ny {
                for i in 0..nx {
                    out.push(if self.is_occupied([i, j, k]) { '#' } else { '.' });
                }
                out.push('\n');
            }
        }
        out
    }

    /// Loads either format; JSON is recognized by a leading `{`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_ascii(&text)
        }
    }
}
