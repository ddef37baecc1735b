//! Pinhole camera with a world-to-camera pose. Camera space looks down +z
//! with +x to the right and +y down the image.

use crate::error::{Error, Result};
use crate::geometry::{look_at_rotation, Pose, Vec3};
use crate::graph::Intrinsics;
use crate::scalar::Real;

/// Points closer to the image plane than this are treated as behind it.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World to camera.
    pub pose: Pose,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        if !self.pose.rotation.is_unit(1e-9) {
            return Err(Error::invalid("camera rotation is not a unit quaternion"));
        }
        Ok(())
    }

    /// A camera at `eye` looking at `target`, with `up` pointing up the image
    /// and the principal point at the image centre.
    pub fn looking_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Result<Self> {
        let rot = look_at_rotation(target - eye, -up)?;
        let cam = Camera {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            pose: Pose::new(rot, eye).inverse(),
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }

    pub fn to_camera<T: Real>(&self, p: Vec3<T>) -> Vec3<T> {
        Pose::<T>::from_f64(self.pose).transform_point(p)
    }

    /// Pixel coordinates and depth, or `None` behind the camera.
    pub fn project<T: Real>(&self, p: Vec3<T>) -> Option<(T, T, T)> {
        let c = self.to_camera(p);
        if c.z.value() <= MIN_DEPTH {
            return None;
        }
        let u = c.x / c.z * self.fx + self.cx;
        let v = c.y / c.z * self.fy + self.cy;
        Some((u, v, c.z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn looking_down_z() {
        let cam = Camera::looking_at(Vec3::ZERO, Vec3::Z, -Vec3::Y, 100.0, 11, 11).unwrap();
        let (u, v, z) = cam.project(Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert!((u - 5.0).abs() < 1e-12 && (v - 5.0).abs() < 1e-12 && (z - 2.0).abs() < 1e-12);
        let (u, v, _) = cam.project(Vec3::new(0.1, 0.2, 1.0)).unwrap();
        assert!((u - 15.0).abs() < 1e-9 && (v - 25.0).abs() < 1e-9);
        assert!(cam.project(Vec3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn up_points_up_the_image() {
        let cam = Camera::looking_at(Vec3::new(0.0, 0.0, 5.0), Vec3::ZERO, Vec3::Y, 50.0, 64, 48).unwrap();
        let (_, v_hi, _) = cam.project(Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let (_, v_lo, _) = cam.project(Vec3::new(0.0, -1.0, 0.0)).unwrap();
        assert!(v_hi < v_lo);
    }
}
