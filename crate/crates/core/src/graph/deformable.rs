//! Link frames of a deformable graph.
//!
//! A deformable link has no rigid pose of its own. For a viewpoint `x0` the
//! link contributes a frame positioned at the projection point of `x0`, which
//! slides along the link proportionally to its stretch, and oriented by a
//! look-at rotation along the link with the face normal of the link's up
//! triangle as up direction.

use alloc::vec::Vec;

use super::{closest_on_segment, GraphTopology};
use crate::error::{Error, Result};
use crate::geometry::{least_parallel_axis, look_at_rotation, rotation_between, Pose, Quat, Vec3};
use crate::scalar::Real;

/// Relative `|cross|` below which an up triangle counts as collinear.
const COLLINEAR_SINE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionPoint {
    /// Closest point on the canonical link to the viewpoint.
    pub canonical: Vec3,
    /// The same fraction of the link at frame t.
    pub moved: Vec3,
    pub ratio: f64,
}

/// Fraction along `[s0, e0]` of the point closest to `x0`, clamped to [0, 1].
pub(crate) fn projection_ratio<T: Real>(x0: Vec3<T>, s0: Vec3<T>, e0: Vec3<T>) -> T {
    closest_on_segment(x0, s0, e0).1
}

pub fn projection_point(
    link_at_0: (Vec3, Vec3),
    link_at_t: (Vec3, Vec3),
    x0: Vec3,
) -> Result<ProjectionPoint> {
    let (s0, e0) = link_at_0;
    let (st, et) = link_at_t;
    if s0.distance(&e0) <= 1e-12 || st.distance(&et) <= 1e-12 {
        return Err(Error::DegenerateLink(0));
    }
    let ratio = projection_ratio(x0, s0, e0);
    Ok(ProjectionPoint {
        canonical: s0 + (e0 - s0) * ratio,
        moved: st + (et - st) * ratio,
        ratio,
    })
}

fn triangle_normal<T: Real>(s: Vec3<T>, e: Vec3<T>, a: Vec3<T>) -> Option<Vec3<T>> {
    let u = e - s;
    let v = a - s;
    let n = u.cross(&v);
    let scale = u.norm().value() * v.norm().value();
    if scale <= 0.0 || n.norm().value() < COLLINEAR_SINE * scale {
        return None;
    }
    n.try_normalized(0.0)
}

/// Look-at rotations of every link at the canonical frame and at frame t.
pub(crate) fn link_rotations<T: Real>(
    topology: &GraphTopology,
    joints_0: &[Vec3<T>],
    joints_t: &[Vec3<T>],
) -> Result<Vec<(Quat<T>, Quat<T>)>> {
    let mut out = Vec::with_capacity(topology.link_count());
    for (i, l) in topology.links().iter().enumerate() {
        let (s0, e0) = (joints_0[l.start], joints_0[l.end]);
        let (st, et) = (joints_t[l.start], joints_t[l.end]);
        let d0 = (e0 - s0).try_normalized(1e-9).ok_or(Error::DegenerateLink(i))?;
        let dt = (et - st).try_normalized(1e-9).ok_or(Error::DegenerateLink(i))?;
        let normals = topology.apex(i).and_then(|a| {
            let n0 = triangle_normal(s0, e0, joints_0[a])?;
            let nt = triangle_normal(st, et, joints_t[a])?;
            Some((n0, nt))
        });
        let (up0, upt) = match normals {
            Some(n) => n,
            None => {
                // No usable triangle: a fixed world axis at the canonical frame,
                // carried along by the minimal rotation of the link direction.
                let up0 = Vec3::from_f64(least_parallel_axis(d0.value()));
                let upt = rotation_between(d0, dt).rotate(up0);
                (up0, upt)
            }
        };
        out.push((look_at_rotation(d0, up0)?, look_at_rotation(dt, upt)?));
    }
    Ok(out)
}

/// Per-link frames for viewpoint `x0` at the canonical frame and at frame t.
/// The rigid motion each link applies to `x0` is
/// `relative_transform(poses_0[l], poses_t[l])`.
pub fn deformable_link_frames(
    topology: &GraphTopology,
    joints_0: &[Vec3],
    joints_t: &[Vec3],
    x0: Vec3,
) -> Result<(Vec<Pose>, Vec<Pose>)> {
    if topology.is_tree() {
        return Err(Error::Topology("link frames need a deformable graph".into()));
    }
    let j = topology.joint_count();
    if joints_0.len() != j || joints_t.len() != j {
        return Err(Error::mismatch("joint positions", j, joints_0.len().min(joints_t.len())));
    }
    let rots = link_rotations(topology, joints_0, joints_t)?;
    let mut p0 = Vec::with_capacity(rots.len());
    let mut pt = Vec::with_capacity(rots.len());
    for (l, (r0, rt)) in topology.links().iter().zip(rots) {
        let pp = projection_point(
            (joints_0[l.start], joints_0[l.end]),
            (joints_t[l.start], joints_t[l.end]),
            x0,
        )?;
        p0.push(Pose::new(r0, pp.canonical));
        pt.push(Pose::new(rt, pp.moved));
    }
    Ok((p0, pt))
}
