//! Synthetic exploration scan: a pose lattice over free space with a yaw
//! sweep at every lattice point, in place of a recorded video.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::embed::{FrameRecord, SyntheticScene};
use crate::error::{Error, Result};
use crate::geom::{wrap, Pose4};
use crate::plan::{distance_transform, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    /// Lattice pitch in x and y, meters.
    pub spacing: f64,
    /// Flight altitudes of the lattice layers.
    pub altitudes: Vec<f64>,
    /// Headings per lattice point, evenly spread over the full turn.
    pub yaw_count: usize,
    /// Keep every `stride`-th frame.
    pub stride: usize,
    /// Minimum distance from occupied voxels.
    pub clearance: f64,
    /// Hide landmarks behind occupied voxels.
    pub occlusion: bool,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            spacing: 0.5,
            altitudes: vec![1.2],
            yaw_count: 8,
            stride: 1,
            clearance: 0.3,
            occlusion: true,
        }
    }
}

/// Frames in serpentine order (rows alternate direction) so consecutive
/// time indices are spatially adjacent, as in a walked scan. Ids equal
/// time indices before subsampling.
pub fn synthetic_scan(scene: &SyntheticScene, grid: &VoxelGrid, params: &ScanParams) -> Result<Vec<FrameRecord>> {
    if !(params.spacing > 0.0) || params.yaw_count == 0 || params.stride == 0 {
        return Err(Error::InvalidArgument(
            "scan spacing, yaw count and stride must be positive".into(),
        ));
    }
    let field = distance_transform(grid);
    let lo = scene.bounds.min;
    let hi = scene.bounds.max;
    let nx = ((hi.x - lo.x) / params.spacing).floor() as usize;
    let ny = ((hi.y - lo.y) / params.spacing).floor() as usize;
    let yaws: Vec<f64> = (0..params.yaw_count)
        .map(|k| wrap(-PI + 2.0 * PI * (k as f64 + 0.5) / params.yaw_count as f64))
        .collect();
    let occluder = params.occlusion.then_some(grid);

    let mut frames = Vec::new();
    let mut t = 0i64;
    for &z in &params.altitudes {
        for iy in 0..ny {
            let row: Box<dyn Iterator<Item = usize>> = if iy % 2 == 0 {
                Box::new(0..nx)
            } else {
                Box::new((0..nx).rev())
            };
            for ix in row {
                let p = Vector3::new(
                    lo.x + (ix as f64 + 0.5) * params.spacing,
                    lo.y + (iy as f64 + 0.5) * params.spacing,
                    z,
                );
                if !scene.bounds.contains(&p) || field.at(&p) < params.clearance {
                    continue;
                }
                for &theta in &yaws {
                    let pose = Pose4 { p, theta };
                    if t % params.stride as i64 == 0 {
                        frames.push(FrameRecord {
                            id: t as u64,
                            pose,
                            embedding: scene.view_embedding_with(&pose, occluder)?,
                            time_index: t,
                        });
                    }
                    t += 1;
                }
            }
        }
    }
    Ok(frames)
}
