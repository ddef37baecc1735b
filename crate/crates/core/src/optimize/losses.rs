use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::render::{render_instance_masks, InstanceMasks};
use crate::scalar::Real;
use crate::skinning::Splat;

/// How observed points relate to the deformed splats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataMode {
    /// Point `i` is the observation of splat `i`.
    Correspondence,
    /// Symmetric chamfer distance between unordered clouds.
    Unordered,
}

/// Loss value together with its gradient with respect to every deformed
/// position.
#[derive(Clone, Debug, PartialEq)]
pub struct DataLoss {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

/// Mean squared distance under correspondence; otherwise
/// `mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2`.
pub fn data_loss(deformed: &[Vec3], observed: &[Vec3], mode: DataMode) -> Result<DataLoss> {
    if deformed.is_empty() || observed.is_empty() {
        return Err(Error::invalid("data loss needs non-empty point sets"));
    }
    match mode {
        DataMode::Correspondence => {
            if deformed.len() != observed.len() {
                return Err(Error::mismatch("observed points", deformed.len(), observed.len()));
            }
            let n = deformed.len() as f64;
            let mut value = 0.0;
            let grad = deformed
                .iter()
                .zip(observed)
                .map(|(p, o)| {
                    let d = *p - *o;
                    value += d.norm_squared();
                    d * (2.0 / n)
                })
                .collect();
            Ok(DataLoss { value: value / n, grad })
        }
        DataMode::Unordered => Ok(chamfer(deformed, observed)),
    }
}

fn nearest(p: &Vec3, cloud: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in cloud.iter().enumerate() {
        let d = (*p - *q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn chamfer(a: &[Vec3], b: &[Vec3]) -> DataLoss {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut grad = vec![Vec3::ZERO; a.len()];
    let mut sum_a = 0.0;
    for (i, p) in a.iter().enumerate() {
        let (j, d) = nearest(p, b);
        sum_a += d;
        grad[i] += (*p - b[j]) * (2.0 / na);
    }
    let mut sum_b = 0.0;
    for q in b {
        let (i, d) = nearest(q, a);
        sum_b += d;
        grad[i] += (a[i] - *q) * (2.0 / nb);
    }
    DataLoss {
        value: sum_a / na + sum_b / nb,
        grad,
    }
}

/// Sum of Euclidean distances between current and initial canonical joints.
pub fn canonical_reg(joints: &[Vec3], initial: &[Vec3]) -> Result<f64> {
    canonical_reg_generic(joints, initial)
}

pub(crate) fn canonical_reg_generic<T: Real>(joints: &[Vec3<T>], initial: &[Vec3]) -> Result<T> {
    if joints.len() != initial.len() {
        return Err(Error::mismatch("initial joints", joints.len(), initial.len()));
    }
    let mut sum = T::zero();
    for (j, i) in joints.iter().zip(initial) {
        sum = sum + (*j - Vec3::from_f64(*i)).norm();
    }
    Ok(sum)
}

/// A 2D keypoint in pixels. Non-positive confidence marks it invalid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn is_valid(&self) -> bool {
        self.confidence > 0.0 && self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointLoss<T = f64> {
    pub value: T,
    /// Keypoints that contributed.
    pub valid: usize,
    /// Valid keypoints whose joint was behind the camera and got excluded.
    pub behind_camera: usize,
}

/// Mean L1 pixel distance between projected joints and valid keypoints.
pub fn keypoint_reg(joints: &[Vec3], keypoints: &[Keypoint], camera: &Camera) -> Result<KeypointLoss> {
    keypoint_reg_generic(joints, keypoints, camera)
}

pub(crate) fn keypoint_reg_generic<T: Real>(
    joints: &[Vec3<T>],
    keypoints: &[Keypoint],
    camera: &Camera,
) -> Result<KeypointLoss<T>> {
    if joints.len() != keypoints.len() {
        return Err(Error::mismatch("keypoints", joints.len(), keypoints.len()));
    }
    let mut sum = T::zero();
    let (mut valid, mut behind) = (0, 0);
    for (j, k) in joints.iter().zip(keypoints) {
        if !k.is_valid() {
            continue;
        }
        match camera.project(*j) {
            Some((u, v, _)) => {
                sum = sum + (u - k.x).abs() + (v - k.y).abs();
                valid += 1;
            }
            None => behind += 1,
        }
    }
    Ok(KeypointLoss {
        value: if valid > 0 { sum / valid as f64 } else { T::zero() },
        valid,
        behind_camera: behind,
    })
}

/// Mean absolute difference between the projected instance masks of
/// `splats` and the reference masks, over every plane and pixel.
pub fn mask_loss(splats: &[Splat], reference: &InstanceMasks, camera: &Camera, radius_px: f64) -> Result<f64> {
    if reference.width != camera.width || reference.height != camera.height {
        return Err(Error::invalid("mask size does not match the camera"));
    }
    let rendered = render_instance_masks(splats, camera, reference.instances, radius_px)?;
    Ok(mask_difference(&rendered, reference))
}

pub(crate) fn mask_difference(a: &InstanceMasks, b: &InstanceMasks) -> f64 {
    let n = a.bits().len();
    if n == 0 {
        return 0.0;
    }
    let diff = a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count();
    diff as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    #[test]
    fn correspondence_arithmetic() {
        let a = [Vec3::new(3.0, 4.0, 0.0)];
        let l = data_loss(&a, &[Vec3::ZERO], DataMode::Correspondence).unwrap();
        assert_eq!(l.value, 25.0);
        assert_eq!(l.grad[0], Vec3::new(6.0, 8.0, 0.0));
        assert_eq!(data_loss(&a, &a, DataMode::Correspondence).unwrap().value, 0.0);
        assert!(data_loss(&a, &[], DataMode::Unordered).is_err());
    }

    #[test]
    fn chamfer_example() {
        let a = [Vec3::ZERO, Vec3::X];
        let b = [Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)];
        assert_eq!(data_loss(&a, &b, DataMode::Unordered).unwrap().value, 1.0);
    }

    #[test]
    fn canonical_reg_sums_norms() {
        let init = [Vec3::ZERO, Vec3::ZERO];
        assert_eq!(canonical_reg(&init, &init).unwrap(), 0.0);
        assert_eq!(canonical_reg(&[Vec3::new(3.0, 4.0, 0.0), Vec3::new(0.0, 0.0, 5.0)], &init).unwrap(), 10.0);
        assert!(canonical_reg(&init, &init[..1]).is_err());
    }

    fn cam() -> Camera {
        Camera { fx: 10.0, fy: 10.0, cx: 0.0, cy: 0.0, pose: Pose::identity(), width: 2, height: 2 }
    }

    #[test]
    fn keypoint_l1() {
        let j = [Vec3::new(1.0, 1.0, 1.0)];
        let l = keypoint_reg(&j, &[Keypoint { x: 13.0, y: 14.0, confidence: 1.0 }], &cam()).unwrap();
        assert_eq!((l.value, l.valid), (7.0, 1));
        let l = keypoint_reg(&j, &[Keypoint { x: 13.0, y: 14.0, confidence: 0.0 }], &cam()).unwrap();
        assert_eq!((l.value, l.valid), (0.0, 0));
        let l = keypoint_reg(&[Vec3::new(0.0, 0.0, -1.0)], &[Keypoint { x: 0.0, y: 0.0, confidence: 1.0 }], &cam()).unwrap();
        assert_eq!((l.valid, l.behind_camera), (0, 1));
    }

    #[test]
    fn mask_miss_and_false_hit() {
        let mut reference = InstanceMasks::empty(2, 2, 2);
        reference.set(1, 0, 0, true);
        let s = Splat::point(Vec3::new(0.0, 0.0, 1.0));
        let l = mask_loss(&[s], &reference, &cam(), 0.0).unwrap();
        assert_eq!(l, 2.0 / 8.0);
        assert_eq!(mask_loss(&[], &reference, &cam(), 0.0).unwrap(), 1.0 / 8.0);
        let mut own = InstanceMasks::empty(2, 2, 2);
        own.set(0, 0, 0, true);
        assert_eq!(mask_loss(&[s], &own, &cam(), 0.0).unwrap(), 0.0);
    }
}
