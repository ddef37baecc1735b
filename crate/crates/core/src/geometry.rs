//! Rigid-body math: vectors, quaternions, SE(3) poses and unit dual
//! quaternions.
//!
//! Quaternions are stored `(w, x, y, z)` and use the Hamilton product. A
//! [`Pose`] maps a point `p` to `rotation * p + translation`; composition
//! `a * b` applies `b` first.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{fm, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(v: Vec3) -> Self {
        Self::new(T::from_f64(v.x), T::from_f64(v.y), T::from_f64(v.z))
    }

    pub fn value(&self) -> Vec3 {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector, or `None` when the norm is below `eps`.
    pub fn try_normalized(&self, eps: f64) -> Option<Self> {
        let n = self.norm();
        if n.value() < eps {
            None
        } else {
            let inv = T::one() / n;
            Some(self.scale(inv))
        }
    }

    pub fn distance(&self, o: &Self) -> T {
        (*self - *o).norm()
    }

    pub fn lerp(&self, o: &Self, t: f64) -> Self {
        *self + (*o - *self) * t
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };
    pub const X: Vec3 = Vec3 {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: Vec3 = Vec3 {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<f64> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Quaternion `w + xi + yj + zk`. Rotations use unit quaternions; the type
/// itself does not enforce the norm so it can also hold blend sums.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<T = f64> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Unit quaternions are the rotation encoding throughout the crate.
pub type UnitQuaternion = Quat<f64>;

impl<T: Real> Quat<T> {
    #[inline]
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn pure(v: Vec3<T>) -> Self {
        Self::new(T::zero(), v.x, v.y, v.z)
    }

    pub fn from_f64(q: Quat) -> Self {
        Self::new(
            T::from_f64(q.w),
            T::from_f64(q.x),
            T::from_f64(q.y),
            T::from_f64(q.z),
        )
    }

    pub fn value(&self) -> Quat {
        Quat::new(self.w.value(), self.x.value(), self.y.value(), self.z.value())
    }

    pub fn vector(&self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(&self) -> Self {
        let inv = T::one() / self.norm();
        self.scale(inv)
    }

    /// Rotate `v` by this (unit) quaternion.
    #[inline]
    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = self.vector();
        let t = u.cross(&v);
        let t2 = t + t;
        v + t2.scale(self.w) + u.cross(&t2)
    }

    /// Rotation matrix, row major.
    pub fn to_matrix(&self) -> [[T; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let two = T::from_f64(2.0);
        let one = T::one();
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    /// Quaternion of an orthonormal rotation matrix (row major), using the
    /// numerically stable branch for the largest diagonal term. The result has
    /// `w >= 0` on the trace branch.
    pub fn from_matrix(m: &[[T; 3]; 3]) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace.value() > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self::new(
                s * 0.25,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0].value() > m[1][1].value() && m[0][0].value() > m[2][2].value() {
            let s = (m[0][0] - m[1][1] - m[2][2] + 1.0).sqrt() * 2.0;
            Self::new(
                (m[2][1] - m[1][2]) / s,
                s * 0.25,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1].value() > m[2][2].value() {
            let s = (m[1][1] - m[0][0] - m[2][2] + 1.0).sqrt() * 2.0;
            Self::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                s * 0.25,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (m[2][2] - m[0][0] - m[1][1] + 1.0).sqrt() * 2.0;
            Self::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                s * 0.25,
            )
        };
        q.normalized()
    }

    /// Rotation whose columns are the images of the local x, y and z axes.
    pub fn from_basis(x: Vec3<T>, y: Vec3<T>, z: Vec3<T>) -> Self {
        Self::from_matrix(&[[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]])
    }

    /// First-order exponential map `normalize(1, v/2)`; smooth at zero, used
    /// for small rotation increments.
    pub fn from_small_rotation(v: Vec3<T>) -> Self {
        Self::new(T::one(), v.x * 0.5, v.y * 0.5, v.z * 0.5).normalized()
    }
}

impl Quat {
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.try_normalized(1e-300).unwrap_or(Vec3::X);
        let (s, c) = (fm::sin(angle * 0.5), fm::cos(angle * 0.5));
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let v = self.vector().norm();
        2.0 * fm::atan2(v, fm::abs(self.w))
    }

    /// Angle of the relative rotation between two unit quaternions.
    pub fn angle_to(&self, o: &Quat) -> f64 {
        (self.conj() * *o).angle()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        fm::abs(self.norm() - 1.0) <= tol
    }

    /// Spherical interpolation along the shorter arc.
    pub fn slerp(&self, o: &Quat, t: f64) -> Quat {
        let mut b = *o;
        let mut d = self.dot(&b);
        if d < 0.0 {
            b = -b;
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            let q = Quat::new(
                self.w + (b.w - self.w) * t,
                self.x + (b.x - self.x) * t,
                self.y + (b.y - self.y) * t,
                self.z + (b.z - self.z) * t,
            );
            return q.normalized();
        }
        let theta = fm::acos(d.min(1.0));
        let s = fm::sin(theta);
        let wa = fm::sin((1.0 - t) * theta) / s;
        let wb = fm::sin(t * theta) / s;
        Quat::new(
            self.w * wa + b.w * wb,
            self.x * wa + b.x * wb,
            self.y * wa + b.y * wb,
            self.z * wa + b.z * wb,
        )
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl<T: Real> Add for Quat<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Neg for Quat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Element of SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T = f64> {
    pub rotation: Quat<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Quat<T>, translation: Vec3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Quat::identity(), Vec3::zero())
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self::new(Quat::identity(), t)
    }

    pub fn from_f64(p: Pose) -> Self {
        Self::new(Quat::from_f64(p.rotation), Vec3::from_f64(p.translation))
    }

    pub fn value(&self) -> Pose {
        Pose::new(self.rotation.value(), self.translation.value())
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.conj();
        Self::new(r, -r.rotate(self.translation))
    }
}

impl Pose {
    /// Homogeneous 4x4 matrix, row major.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_rotation(rotation: Quat) -> Self {
        Pose::new(rotation, Vec3::ZERO)
    }
}

impl<T: Real> Mul for Pose<T> {
    type Output = Self;
    /// `(a * b)(p) = a(b(p))`
    fn mul(self, b: Self) -> Self {
        Self::new(
            self.rotation * b.rotation,
            self.rotation.rotate(b.translation) + self.translation,
        )
    }
}

/// Unit dual quaternion `real + eps * dual` encoding a rigid transform, with
/// `dual = 1/2 * t * real`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualQuat<T = f64> {
    pub real: Quat<T>,
    pub dual: Quat<T>,
}

pub type DualQuaternion = DualQuat<f64>;

impl<T: Real> DualQuat<T> {
    pub fn new(real: Quat<T>, dual: Quat<T>) -> Self {
        Self { real, dual }
    }

    pub fn identity() -> Self {
        Self::new(Quat::identity(), Quat::zero())
    }

    pub fn from_pose(p: &Pose<T>) -> Self {
        let dual = (Quat::pure(p.translation) * p.rotation).scale(T::from_f64(0.5));
        Self::new(p.rotation, dual)
    }

    /// Normalize by the real part's norm and decode. Fails when the real part
    /// is (numerically) zero.
    pub fn to_pose(&self) -> Result<Pose<T>> {
        let n = self.real.norm();
        if n.value() < 1e-12 {
            return Err(Error::DegenerateTransform(n.value()));
        }
        let inv = T::one() / n;
        let real = self.real.scale(inv);
        let dual = self.dual.scale(inv);
        let t = (dual * real.conj()).vector().scale(T::from_f64(2.0));
        Ok(Pose::new(real, t))
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.real.scale(s), self.dual.scale(s))
    }

    pub fn from_f64(d: DualQuaternion) -> Self {
        Self::new(Quat::from_f64(d.real), Quat::from_f64(d.dual))
    }

    pub fn value(&self) -> DualQuaternion {
        DualQuat::new(self.real.value(), self.dual.value())
    }
}

impl<T: Real> Add for DualQuat<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.real + o.real, self.dual + o.dual)
    }
}

impl<T: Real> Neg for DualQuat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.real, -self.dual)
    }
}

pub fn pose_to_dq(p: &Pose) -> DualQuaternion {
    DualQuat::from_pose(p)
}

pub fn dq_to_pose(d: &DualQuaternion) -> Result<Pose> {
    d.to_pose()
}

/// Dual-quaternion blend over `(weight, transform)` pairs. Signs are aligned
/// to the entry with the largest weight (first on ties) before summing.
/// A single entry is decoded directly.
pub fn blend_weighted<T: Real>(items: &[(T, DualQuat<T>)]) -> Result<Pose<T>> {
    if items.is_empty() {
        return Err(Error::DegenerateBlend);
    }
    if items.len() == 1 {
        return items[0].1.to_pose();
    }
    let mut pivot = 0;
    for (i, (w, _)) in items.iter().enumerate() {
        if w.value() > items[pivot].0.value() {
            pivot = i;
        }
    }
    let pr = items[pivot].1.real.value();
    let mut acc = DualQuat::new(Quat::zero(), Quat::zero());
    for (w, d) in items {
        let aligned = if d.real.value().dot(&pr) < 0.0 { -*d } else { *d };
        acc = acc + aligned.scale(*w);
    }
    if acc.real.norm().value() < 1e-12 {
        return Err(Error::DegenerateBlend);
    }
    acc.to_pose()
}

/// Blend rigid transforms with a probability vector using dual-quaternion
/// skinning.
pub fn dq_blend(transforms: &[DualQuaternion], weights: &[f64]) -> Result<Pose> {
    if transforms.len() != weights.len() {
        return Err(Error::mismatch("blend weights", transforms.len(), weights.len()));
    }
    check_simplex(weights, 1e-9)?;
    let items: Vec<(f64, DualQuaternion)> = weights
        .iter()
        .zip(transforms)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, d)| (*w, *d))
        .collect();
    blend_weighted(&items)
}

pub(crate) fn check_simplex(weights: &[f64], tol: f64) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    let mut sum = 0.0;
    for &w in weights {
        if !(w >= 0.0) {
            return Err(Error::InvalidWeights(alloc::format!("negative or NaN weight {w}")));
        }
        sum += w;
    }
    if fm::abs(sum - 1.0) > tol {
        return Err(Error::InvalidWeights(alloc::format!("weights sum to {sum}")));
    }
    Ok(())
}

/// `pt * p0^-1`: the rigid motion taking `p0` to `pt`.
pub fn relative_transform<T: Real>(p0: &Pose<T>, pt: &Pose<T>) -> Pose<T> {
    *pt * p0.inverse()
}

/// Rotation part of [`look_at`]: local +z maps to `forward`, local +y to the
/// component of `up` orthogonal to `forward`, local +x to `y x z`.
pub fn look_at_rotation<T: Real>(forward: Vec3<T>, up: Vec3<T>) -> Result<Quat<T>> {
    let z = forward.try_normalized(1e-300).ok_or(Error::DegenerateFrame)?;
    let u = up.try_normalized(1e-300).ok_or(Error::DegenerateFrame)?;
    if fm::abs(z.dot(&u).value()) >= 1.0 - 1e-9 {
        return Err(Error::DegenerateFrame);
    }
    let y = (u - z.scale(z.dot(&u)))
        .try_normalized(1e-300)
        .ok_or(Error::DegenerateFrame)?;
    let x = y.cross(&z);
    Ok(Quat::from_basis(x, y, z))
}

pub fn look_at<T: Real>(position: Vec3<T>, forward: Vec3<T>, up: Vec3<T>) -> Result<Pose<T>> {
    Ok(Pose::new(look_at_rotation(forward, up)?, position))
}

/// Minimal rotation taking unit vector `a` onto unit vector `b`. Antiparallel
/// inputs rotate by pi about an axis orthogonal to `a`.
pub fn rotation_between<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Quat<T> {
    let c = a.dot(&b);
    if c.value() < -1.0 + 1e-12 {
        let axis = least_parallel_axis(a.value());
        let perp = a.cross(&Vec3::from_f64(axis));
        let perp = perp.try_normalized(1e-300).unwrap_or(Vec3::from_f64(Vec3::Y));
        return Quat::new(T::zero(), perp.x, perp.y, perp.z);
    }
    let v = a.cross(&b);
    Quat::new(c + 1.0, v.x, v.y, v.z).normalized()
}

/// The coordinate axis with the smallest absolute cosine to `d` (first on
/// ties, in x, y, z order).
pub fn least_parallel_axis(d: Vec3) -> Vec3 {
    let ax = [Vec3::X, Vec3::Y, Vec3::Z];
    let c = [fm::abs(d.x), fm::abs(d.y), fm::abs(d.z)];
    let mut best = 0;
    for i in 1..3 {
        if c[i] < c[best] {
            best = i;
        }
    }
    ax[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_pose_encodes_to_identity_dq() {
        let d = pose_to_dq(&Pose::identity());
        assert_eq!(d.real, Quat::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(d.dual, Quat::new(0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn translation_dual_part() {
        let d = pose_to_dq(&Pose::from_translation(Vec3::new(2.0, 0.0, 0.0)));
        assert_eq!(d.dual, Quat::new(0.0, 1.0, 0.0, 0.0));
        let back = dq_to_pose(&d).unwrap();
        assert_eq!(back.translation, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = Quat::from_axis_angle(Vec3::Z, core::f64::consts::FRAC_PI_2);
        let d = pose_to_dq(&Pose::from_rotation(q));
        assert!(close(d.real.w, FRAC_1_SQRT_2, 1e-15));
        assert!(close(d.real.z, FRAC_1_SQRT_2, 1e-15));
        assert!(d.real.x == 0.0 && d.real.y == 0.0);
        assert_eq!(d.dual.norm(), 0.0);
    }

    #[test]
    fn degenerate_real_part_is_rejected() {
        let d = DualQuat::new(Quat::new(0.0, 0.0, 0.0, 1e-13), Quat::zero());
        assert!(matches!(dq_to_pose(&d), Err(Error::DegenerateTransform(_))));
    }

    #[test]
    fn look_at_convention_anchor() {
        let p = look_at(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        assert!(p.rotation.angle() < 1e-15);
        assert_eq!(p.translation, Vec3::ZERO);
    }

    #[test]
    fn look_at_parallel_up_fails() {
        assert_eq!(look_at(Vec3::ZERO, Vec3::Z, Vec3::Z), Err(Error::DegenerateFrame));
    }

    #[test]
    fn blend_rejects_bad_weights() {
        let t = [DualQuat::identity(), DualQuat::identity()];
        assert!(dq_blend(&t, &[0.7, 0.7]).is_err());
        assert!(dq_blend(&t, &[1.5, -0.5]).is_err());
        assert!(dq_blend(&t, &[1.0]).is_err());
    }

    #[test]
    fn opposite_unit_dqs_cancel() {
        // A blend whose aligned sum vanishes cannot happen for unit inputs
        // (alignment prevents it), so feed an already-zero real part.
        let z = DualQuat::new(Quat::zero(), Quat::zero());
        assert_eq!(blend_weighted(&[(0.5, z), (0.5, z)]), Err(Error::DegenerateBlend));
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let a = Quat::identity();
        let b = Quat::from_axis_angle(Vec3::Z, 1.0);
        assert!(a.slerp(&b, 0.0).angle_to(&a) < 1e-12);
        assert!(a.slerp(&b, 1.0).angle_to(&b) < 1e-12);
        let m = a.slerp(&b, 0.5);
        assert!(close(m.angle(), 0.5, 1e-12));
    }

    #[test]
    fn rotation_between_maps_a_onto_b() {
        let a = Vec3::new(1.0, 2.0, -0.5).try_normalized(0.0).unwrap();
        let b = Vec3::new(-0.3, 0.1, 0.9).try_normalized(0.0).unwrap();
        let q = rotation_between(a, b);
        let r = q.rotate(a);
        assert!((r - b).norm() < 1e-12);
        let q = rotation_between(a, -a);
        assert!((q.rotate(a) + a).norm() < 1e-12);
    }
}
