//! Lifting 2D keypoints to 3D with a depth image.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Row-major depth map in scene units. Zero or non-finite entries are holes.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::mismatch("depth pixels", width * height, depth.len()));
        }
        Ok(DepthImage { width, height, depth })
    }

    fn valid(&self, x: usize, y: usize) -> Option<f64> {
        let d = self.depth[y * self.width + x];
        (d.is_finite() && d > 0.0).then_some(d)
    }

    /// Depth at a pixel, or the median of the valid depths in the 5x5
    /// neighbourhood when the pixel itself is a hole.
    pub fn sample(&self, x: usize, y: usize) -> Option<f64> {
        if let Some(d) = self.valid(x, y) {
            return Some(d);
        }
        let mut near = Vec::with_capacity(25);
        for yy in y.saturating_sub(2)..=(y + 2).min(self.height - 1) {
            for xx in x.saturating_sub(2)..=(x + 2).min(self.width - 1) {
                if let Some(d) = self.valid(xx, yy) {
                    near.push(d);
                }
            }
        }
        if near.is_empty() {
            return None;
        }
        near.sort_by(f64::total_cmp);
        let m = near.len() / 2;
        Some(if near.len() % 2 == 1 {
            near[m]
        } else {
            0.5 * (near[m - 1] + near[m])
        })
    }
}

/// Pinhole unprojection of pixel keypoints into camera coordinates. `None`
/// marks a keypoint without usable depth.
pub fn lift_2d_skeleton(
    keypoints: &[(f64, f64)],
    depth: &DepthImage,
    intrinsics: &Intrinsics,
) -> Result<Vec<Option<Vec3>>> {
    if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
        return Err(Error::invalid("focal lengths must be positive"));
    }
    keypoints
        .iter()
        .map(|&(u, v)| {
            if !(u >= 0.0 && v >= 0.0) || u >= depth.width as f64 || v >= depth.height as f64 {
                return Err(Error::invalid(alloc::format!("keypoint ({u}, {v}) outside the image")));
            }
            let px = crate::scalar::fm::floor(u) as usize;
            let py = crate::scalar::fm::floor(v) as usize;
            Ok(depth.sample(px, py).map(|z| {
                Vec3::new(
                    z * (u - intrinsics.cx) / intrinsics.fx,
                    z * (v - intrinsics.cy) / intrinsics.fy,
                    z,
                )
            }))
        })
        .collect()
}
