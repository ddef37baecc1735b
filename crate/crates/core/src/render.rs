//! Hard z-buffer point projector for previews and instance masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::scalar::fm;
use crate::skinning::Splat;

/// Splats with lower opacity are not drawn.
pub const MIN_OPACITY: f64 = 0.05;

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn black(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0; 3]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// One binary plane per instance, each row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMasks {
    pub width: usize,
    pub height: usize,
    pub instances: usize,
    bits: Vec<bool>,
}

impl InstanceMasks {
    pub fn empty(width: usize, height: usize, instances: usize) -> Self {
        InstanceMasks {
            width,
            height,
            instances,
            bits: vec![false; width * height * instances],
        }
    }

    /// From planes laid out instance-major, then row-major.
    pub fn from_bits(width: usize, height: usize, instances: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height * instances {
            return Err(Error::mismatch("mask bits", width * height * instances, bits.len()));
        }
        Ok(InstanceMasks {
            width,
            height,
            instances,
            bits,
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, instance: usize, x: usize, y: usize) -> bool {
        self.bits[(instance * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, instance: usize, x: usize, y: usize, on: bool) {
        self.bits[(instance * self.height + y) * self.width + x] = on;
    }

    pub fn count_set(&self, instance: usize) -> usize {
        let n = self.width * self.height;
        self.bits[instance * n..(instance + 1) * n].iter().filter(|b| **b).count()
    }
}

/// Front-most splat index per pixel. Pixel centres sit at integer
/// coordinates; a splat covers the pixels within `radius_px` of its
/// projection, or just the nearest pixel when that disc holds no centre.
/// Depth ties keep the lower splat index.
pub fn visible_splats(splats: &[Splat], camera: &Camera, radius_px: f64) -> Vec<Option<usize>> {
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut owner = vec![None; w * h];
    let r = radius_px.max(0.0);
    let mut plot = |x: i64, y: i64, z: f64, i: usize| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return;
        }
        let k = y as usize * w + x as usize;
        if z < depth[k] {
            depth[k] = z;
            owner[k] = Some(i);
        }
    };
    for (i, s) in splats.iter().enumerate() {
        if s.opacity < MIN_OPACITY {
            continue;
        }
        let Some((u, v, z)) = camera.project(s.position()) else {
            continue;
        };
        if !(u.is_finite() && v.is_finite()) {
            continue;
        }
        let (x0, x1) = (fm::ceil(u - r) as i64, fm::floor(u + r) as i64);
        let (y0, y1) = (fm::ceil(v - r) as i64, fm::floor(v + r) as i64);
        let mut any = false;
        for y in y0.max(0)..=y1.min(h as i64 - 1) {
            for x in x0.max(0)..=x1.min(w as i64 - 1) {
                let (dx, dy) = (x as f64 - u, y as f64 - v);
                if dx * dx + dy * dy <= r * r {
                    plot(x, y, z, i);
                    any = true;
                }
            }
        }
        if !any {
            plot(fm::round(u) as i64, fm::round(v) as i64, z, i);
        }
    }
    owner
}

fn to_byte(c: f64) -> u8 {
    fm::round(c.clamp(0.0, 1.0) * 255.0) as u8
}

pub fn render_points(splats: &[Splat], camera: &Camera, radius_px: f64) -> Image {
    let owner = visible_splats(splats, camera, radius_px);
    Image {
        width: camera.width,
        height: camera.height,
        pixels: owner
            .iter()
            .map(|o| match o {
                Some(i) => splats[*i].color.map(to_byte),
                None => [0; 3],
            })
            .collect(),
    }
}

pub fn render_instance_masks(
    splats: &[Splat],
    camera: &Camera,
    instance_count: usize,
    radius_px: f64,
) -> Result<InstanceMasks> {
    if let Some(s) = splats.iter().find(|s| s.instance_id as usize >= instance_count) {
        return Err(Error::invalid(alloc::format!(
            "instance id {} outside 0..{instance_count}",
            s.instance_id
        )));
    }
    let owner = visible_splats(splats, camera, radius_px);
    let mut m = InstanceMasks::empty(camera.width, camera.height, instance_count);
    for (k, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            let (x, y) = (k % camera.width, k / camera.width);
            m.set(splats[*i].instance_id as usize, x, y, true);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};

    fn cam() -> Camera {
        Camera {
            fx: 10.0,
            fy: 10.0,
            cx: 4.0,
            cy: 3.0,
            pose: Pose::identity(),
            width: 9,
            height: 7,
        }
    }

    fn splat(p: Vec3, color: [f64; 3], instance: u32) -> Splat {
        let mut s = Splat::point(p);
        s.color = color;
        s.instance_id = instance;
        s
    }

    #[test]
    fn on_axis_splat_colors_the_principal_pixel() {
        let img = render_points(&[splat(Vec3::new(0.0, 0.0, 1.0), [1.0, 0.0, 0.0], 0)], &cam(), 1.0);
        assert_eq!(img.get(4, 3), [255, 0, 0]);
        assert_eq!(img.get(4, 4), [255, 0, 0]);
        assert_eq!(img.get(5, 4), [0, 0, 0]);
    }

    #[test]
    fn nearer_splat_wins() {
        let s = [
            splat(Vec3::new(0.0, 0.0, 2.0), [0.0, 0.0, 1.0], 0),
            splat(Vec3::new(0.0, 0.0, 1.0), [0.0, 1.0, 0.0], 1),
        ];
        assert_eq!(render_points(&s, &cam(), 0.0).get(4, 3), [0, 255, 0]);
        let m = render_instance_masks(&s, &cam(), 2, 0.0).unwrap();
        assert!(m.get(1, 4, 3) && !m.get(0, 4, 3));
    }

    #[test]
    fn hidden_and_transparent_splats_are_skipped() {
        let mut faint = splat(Vec3::new(0.0, 0.0, 1.0), [1.0; 3], 0);
        faint.opacity = 0.01;
        let behind = splat(Vec3::new(0.0, 0.0, -1.0), [1.0; 3], 0);
        assert_eq!(render_points(&[faint, behind], &cam(), 2.0), Image::black(9, 7));
    }

    #[test]
    fn masks_count_and_validate() {
        let m = render_instance_masks(&[splat(Vec3::new(0.0, 0.0, 1.0), [1.0; 3], 0)], &cam(), 1, 0.0).unwrap();
        assert_eq!(m.count_set(0), 1);
        assert_eq!(render_instance_masks(&[], &cam(), 2, 1.0).unwrap(), InstanceMasks::empty(9, 7, 2));
        assert!(render_instance_masks(&[splat(Vec3::Z, [1.0; 3], 3)], &cam(), 2, 1.0).is_err());
    }

    #[test]
    fn equal_depth_keeps_lower_index() {
        let s = [
            splat(Vec3::new(0.0, 0.0, 1.0), [1.0, 0.0, 0.0], 0),
            splat(Vec3::new(0.0, 0.0, 1.0), [0.0, 1.0, 0.0], 0),
        ];
        assert_eq!(render_points(&s, &cam(), 0.0).get(4, 3), [255, 0, 0]);
    }
}
