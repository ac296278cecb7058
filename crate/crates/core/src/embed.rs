//! Semantic embeddings, the synthetic landmark scene and frame ingestion.
//!
//! The synthetic scene replaces a photorealistic reconstruction: every
//! landmark carries a unit semantic vector and a view embedding is the
//! normalized, visibility-weighted sum of the semantics in front of the camera.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Pose4;
use crate::plan::VoxelGrid;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_FOV: f64 = 1.5;

/// Dense semantic vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidArgument("empty embedding".into()));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite embedding component".into()));
        }
        Ok(Embedding(v))
    }

    /// Builds and normalizes in one step; zero vectors are rejected.
    pub fn unit(v: Vec<f64>) -> Result<Self> {
        Self::new(v)?.normalized()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize a zero embedding".into()));
        }
        Ok(Embedding(self.0.iter().map(|x| x / n).collect()))
    }

    /// The reserved "nothing in view" vector: normalized all-ones.
    pub fn background(dim: usize) -> Self {
        let v = 1.0 / (dim as f64).sqrt();
        Embedding(vec![v; dim])
    }

    /// Basis vector `e_i` of dimension `dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Embedding(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "embedding dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine of a zero vector".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Deterministic text-to-unit-vector map used when no encoder is available:
/// SHA-256 of the UTF-8 text seeds a ChaCha8 stream of standard normals,
/// which is then normalized.
pub fn hash_embedding(text: &str, dim: usize) -> Embedding {
    let digest: [u8; 32] = Sha256::digest(text.as_bytes()).into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Embedding::unit(v).expect("gaussian draw is nonzero")
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if !(0..3).all(|i| min[i] < max[i]) {
            return Err(Error::InvalidArgument("box min must be below max on every axis".into()));
        }
        Ok(Aabb { min, max })
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub label: String,
    pub semantic: Embedding,
}

/// Landmark scene standing in for a photorealistic reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub bounds: Aabb,
    #[serde(default = "default_fov")]
    pub fov: f64,
    /// Weight of the background vector added to every view. Zero reproduces
    /// the pure landmark mixture; a positive value makes similarity fall off
    /// with distance and off-axis angle even when a single landmark is visible.
    #[serde(default)]
    pub ambient: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_ref: Option<String>,
    pub landmarks: Vec<Landmark>,
}

fn default_fov() -> f64 {
    DEFAULT_FOV
}

impl SyntheticScene {
    /// Validates and normalizes landmark semantics.
    pub fn new(bounds: Aabb, fov: f64, landmarks: Vec<Landmark>) -> Result<Self> {
        let mut scene = SyntheticScene {
            bounds,
            fov,
            ambient: 0.0,
            grid_ref: None,
            landmarks,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_ambient(mut self, ambient: f64) -> Result<Self> {
        self.ambient = ambient;
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut scene: SyntheticScene = serde_json::from_str(&text).map_err(|e| Error::Parse {
            record: e.line(),
            message: format!("{}: {e}", path.display()),
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn dim(&self) -> usize {
        self.landmarks.first().map_or(DEFAULT_DIM, |l| l.semantic.dim())
    }

    pub fn landmark(&self, label: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.label == label)
    }

    fn validate(&mut self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::InvalidData(format!("fov {} outside (0, π)", self.fov)));
        }
        if !(self.ambient >= 0.0 && self.ambient.is_finite()) {
            return Err(Error::InvalidData(format!("ambient weight {} must be ≥ 0", self.ambient)));
        }
        let dim = self.dim();
        let bg = Embedding::background(dim);
        for l in &mut self.landmarks {
            if !(l.radius > 0.0) {
                return Err(Error::InvalidData(format!("landmark {}: radius must be > 0", l.label)));
            }
            if !self.bounds.contains(&l.center) {
                return Err(Error::InvalidData(format!("landmark {} lies outside the scene bounds", l.label)));
            }
            if l.semantic.dim() != dim {
                return Err(Error::InvalidData(format!(
                    "landmark {}: semantic dimension {} differs from {dim}",
                    l.label,
                    l.semantic.dim()
                )));
            }
            l.semantic = l.semantic.normalized()?;
            if l.semantic.dot(&bg) > 1.0 - 1e-9 {
                return Err(Error::InvalidData(format!(
                    "landmark {} uses the reserved background vector",
                    l.label
                )));
            }
        }
        Ok(())
    }

    /// Per-landmark weight `vis · falloff` seen from `pose`.
    pub fn landmark_weights(&self, pose: &Pose4) -> Vec<f64> {
        let cos_half = (0.5 * self.fov).cos();
        let fwd = pose.forward();
        self.landmarks
            .iter()
            .map(|l| {
                let ray = l.center - pose.p;
                let dist = ray.norm();
                let vis = if dist == 0.0 {
                    1.0
                } else {
                    let cos_a = fwd.dot(&ray) / dist;
                    (cos_a - cos_half).max(0.0) / (1.0 - cos_half)
                };
                vis * l.radius / l.radius.max(dist)
            })
            .collect()
    }

    /// Deterministic stand-in for rendering a frame and encoding it.
    pub fn view_embedding(&self, pose: &Pose4) -> Result<Embedding> {
        self.view_embedding_with(pose, None)
    }

    /// As [`Self::view_embedding`], optionally hiding landmarks whose line of
    /// sight crosses an occupied voxel of `occluder`.
    pub fn view_embedding_with(&self, pose: &Pose4, occluder: Option<&VoxelGrid>) -> Result<Embedding> {
        if !self.bounds.contains(&pose.p) {
            return Err(Error::OutOfBounds(format!(
                "pose [{:.3}, {:.3}, {:.3}] outside scene bounds",
                pose.p.x, pose.p.y, pose.p.z
            )));
        }
        let dim = self.dim();
        let mut weights = self.landmark_weights(pose);
        if let Some(grid) = occluder {
            for (w, l) in weights.iter_mut().zip(&self.landmarks) {
                if *w > 0.0 && grid.segment_blocked(&pose.p, &l.center, l.radius) {
                    *w = 0.0;
                }
            }
        }
        if self.ambient == 0.0 && weights.iter().all(|&w| w == 0.0) {
            return Ok(Embedding::background(dim));
        }
        let bg = Embedding::background(dim);
        let mut acc = vec![0.0; dim];
        for (w, l) in weights.iter().zip(&self.landmarks) {
            if *w == 0.0 {
                continue;
            }
            for (a, s) in acc.iter_mut().zip(l.semantic.as_slice()) {
                *a += w * s;
            }
        }
        if self.ambient > 0.0 {
            for (a, b) in acc.iter_mut().zip(bg.as_slice()) {
                *a += self.ambient * b;
            }
        }
        Ok(Embedding::unit(acc).unwrap_or(bg))
    }
}

/// One frame of an exploration scan with its pose and image embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub id: u64,
    pub pose: Pose4,
    pub embedding: Embedding,
    pub time_index: i64,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    id: u64,
    t: i64,
    pose: Pose4,
    emb: Vec<f64>,
}

impl Serialize for FrameRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawFrame {
            id: self.id,
            t: self.time_index,
            pose: self.pose,
            emb: self.embedding.as_slice().to_vec(),
        }
        .serialize(s)
    }
}

/// Parses a frame-record JSON document. See [`ingest_frames`].
pub fn parse_frames(text: &str) -> Result<Vec<FrameRecord>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
        record: e.line(),
        message: format!("expected a JSON array of frame records: {e}"),
    })?;
    let mut frames = Vec::with_capacity(values.len());
    let mut ids = HashSet::new();
    let mut dim = None;
    for (record, value) in values.into_iter().enumerate() {
        let raw: RawFrame = serde_json::from_value(value).map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        if !ids.insert(raw.id) {
            return Err(Error::Parse {
                record,
                message: format!("duplicate frame id {}", raw.id),
            });
        }
        match dim {
            None => dim = Some(raw.emb.len()),
            Some(d) if d != raw.emb.len() => {
                return Err(Error::InvalidData(format!(
                    "frame {} has embedding dimension {}, expected {d}",
                    raw.id,
                    raw.emb.len()
                )))
            }
            _ => {}
        }
        let embedding = Embedding::unit(raw.emb).map_err(|e| {
            Error::InvalidData(format!("frame {}: {e}", raw.id))
        })?;
        frames.push((
            record,
            FrameRecord {
                id: raw.id,
                pose: raw.pose,
                embedding,
                time_index: raw.t,
            },
        ));
    }
    frames.sort_by_key(|(_, f)| f.time_index);
    for pair in frames.windows(2) {
        if pair[0].1.time_index == pair[1].1.time_index {
            return Err(Error::Parse {
                record: pair[1].0,
                message: format!("repeated time index {}", pair[1].1.time_index),
            });
        }
    }
    Ok(frames.into_iter().map(|(_, f)| f).collect())
}

/// Loads scan frames, sorted by time index with normalized embeddings.
pub fn ingest_frames(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frames(&text)
}

/// Keeps every `stride`-th frame (by time order).
pub fn subsample(frames: Vec<FrameRecord>, stride: usize) -> Vec<FrameRecord> {
    let stride = stride.max(1);
    frames.into_iter().step_by(stride).collect()
}
