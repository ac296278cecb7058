use std::io::Cursor;

use base64::Engine;
use image::{ImageFormat, Rgb, RgbImage};
use nalgebra::Vector3;

use crate::embed::SyntheticScene;
use crate::error::{Error, Result};
use crate::geom::Pose4;

pub const BACKGROUND: [u8; 3] = [28, 30, 38];

/// Fixed color per label (FNV-1a 64 of the UTF-8 bytes). Channels are kept
/// away from the background.
pub fn label_color(label: &str) -> [u8; 3] {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let c = |shift: u32| 64 + ((h >> shift) & 0xff) as u8 % 192;
    [c(0), c(8), c(16)]
}

/// Pinhole raster of the landmark discs seen from `pose`.
///
/// The horizontal field of view is the scene's `fov`. Landmarks behind the
/// camera are culled; the rest are painted far to near.
pub fn render_schematic(scene: &SyntheticScene, pose: &Pose4, width: u32, height: u32) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("image size must be nonzero".into()));
    }
    if !scene.bounds.contains(&pose.p) {
        return Err(Error::OutOfBounds(format!(
            "pose [{:.3}, {:.3}, {:.3}] outside scene bounds",
            pose.p.x, pose.p.y, pose.p.z
        )));
    }
    let fwd = pose.forward();
    let left = Vector3::new(-pose.theta.sin(), pose.theta.cos(), 0.0);
    let up = Vector3::z();
    let focal = 0.5 * width as f64 / (0.5 * scene.fov).tan();
    let (cx, cy) = (0.5 * width as f64, 0.5 * height as f64);

    let mut discs: Vec<(f64, usize, f64, f64, f64)> = scene
        .landmarks
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            let d = l.center - pose.p;
            let depth = d.dot(&fwd);
            if depth <= 1e-6 {
                return None;
            }
            let u = cx + focal * (-d.dot(&left)) / depth;
            let v = cy - focal * d.dot(&up) / depth;
            Some((depth, i, u, v, focal * l.radius / depth))
        })
        .collect();
    discs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut img = RgbImage::from_pixel(width, height, Rgb(BACKGROUND));
    for (_, i, u, v, r) in discs {
        let color = Rgb(label_color(&scene.landmarks[i].label));
        let x0 = (u - r).floor().max(0.0) as u32;
        let y0 = (v - r).floor().max(0.0) as u32;
        let x1 = (u + r).ceil().min(width as f64).max(0.0) as u32;
        let y1 = (v + r).ceil().min(height as f64).max(0.0) as u32;
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if (px - u).powi(2) + (py - v).powi(2) <= r * r {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    Ok(img)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::InvalidData(format!("png encoding failed: {e}")))?;
    Ok(buf.into_inner())
}

pub fn render_png(scene: &SyntheticScene, pose: &Pose4, width: u32, height: u32) -> Result<Vec<u8>> {
    encode_png(&render_schematic(scene, pose, width, height)?)
}

pub fn render_png_base64(scene: &SyntheticScene, pose: &Pose4, width: u32, height: u32) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(render_png(scene, pose, width, height)?))
}
