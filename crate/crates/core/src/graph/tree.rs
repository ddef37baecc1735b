//! Forward kinematics for kinematic trees.
//!
//! The root frame is `root_pose * r_root`. Walking parent to child along link
//! `(p, c)` of length `l`, the child sits at `origin(p) + R(p) * (l, 0, 0)` and
//! its frame rotation is `R(p) * r_c`. A link's pose is the accumulated frame
//! of its start joint.

use alloc::vec;
use alloc::vec::Vec;

use super::{GraphTopology, KinematicTreeParams, TreeTheta};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct TreeFrames<T = f64> {
    pub joints: Vec<Vec3<T>>,
    /// Accumulated frame of every joint.
    pub joint_frames: Vec<Pose<T>>,
    /// Pose of every link, in link order of the topology.
    pub link_poses: Vec<Pose<T>>,
}

/// Forward kinematics on raw parameters. Quaternions are normalized on the
/// way in, so unconstrained optimizer iterates are valid inputs.
pub fn forward_kinematics_raw<T: Real>(
    topology: &GraphTopology,
    theta: &TreeTheta<T>,
    link_lengths: &[T],
) -> Result<TreeFrames<T>> {
    if !topology.is_tree() {
        return Err(Error::Topology("forward kinematics needs a kinematic tree".into()));
    }
    let j = topology.joint_count();
    if theta.rotations.len() != j {
        return Err(Error::mismatch("joint rotations", j, theta.rotations.len()));
    }
    if link_lengths.len() != topology.link_count() {
        return Err(Error::mismatch("link lengths", topology.link_count(), link_lengths.len()));
    }
    let root = topology.root();
    let root_rot = theta.root.rotation.normalized();
    let mut frames: Vec<Option<Pose<T>>> = vec![None; j];
    frames[root] = Some(Pose::new(
        root_rot * theta.rotations[root].normalized(),
        theta.root.translation,
    ));
    let mut link_poses = vec![Pose::identity(); topology.link_count()];
    for &li in topology.link_order() {
        let link = topology.links()[li];
        let parent = frames[link.start].expect("link order places parents first");
        let offset = parent
            .rotation
            .rotate(Vec3::new(link_lengths[li], T::zero(), T::zero()));
        let origin = parent.translation + offset;
        frames[link.end] = Some(Pose::new(
            parent.rotation * theta.rotations[link.end].normalized(),
            origin,
        ));
        link_poses[li] = parent;
    }
    let joint_frames: Vec<Pose<T>> = frames
        .into_iter()
        .map(|f| f.expect("tree is connected"))
        .collect();
    Ok(TreeFrames {
        joints: joint_frames.iter().map(|f| f.translation).collect(),
        joint_frames,
        link_poses,
    })
}

/// Joint positions and link poses of a tree.
pub fn forward_kinematics(
    topology: &GraphTopology,
    params: &KinematicTreeParams,
) -> Result<(Vec<Vec3>, Vec<Pose>)> {
    topology.check_phi(&params.link_lengths)?;
    for q in params.theta.rotations.iter().chain(core::iter::once(&params.theta.root.rotation)) {
        if !q.is_unit(1e-9) {
            return Err(Error::invalid("joint rotations must be unit quaternions"));
        }
    }
    let f = forward_kinematics_raw(topology, &params.theta, &params.link_lengths)?;
    Ok((f.joints, f.link_poses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use crate::graph::Link;
    use core::f64::consts::FRAC_PI_2;

    fn chain(n: usize) -> GraphTopology {
        let links = (0..n - 1).map(|i| Link::new(i, i + 1)).collect();
        GraphTopology::kinematic_tree(n, links, 0).unwrap()
    }

    #[test]
    fn straight_chain_along_x() {
        let topo = chain(3);
        let p = KinematicTreeParams {
            theta: TreeTheta::rest(3),
            link_lengths: vec![1.0, 1.0],
        };
        let (j, poses) = forward_kinematics(&topo, &p).unwrap();
        assert_eq!(j, vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)]);
        assert_eq!(poses[1].translation, Vec3::X);
    }

    #[test]
    fn quarter_turn_at_second_joint() {
        let topo = chain(3);
        let mut theta = TreeTheta::rest(3);
        theta.rotations[1] = Quat::from_axis_angle(Vec3::Z, FRAC_PI_2);
        let p = KinematicTreeParams {
            theta,
            link_lengths: vec![1.0, 1.0],
        };
        let (j, _) = forward_kinematics(&topo, &p).unwrap();
        assert!((j[2] - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn root_translation_shifts_everything() {
        let topo = chain(4);
        let mut theta = TreeTheta::rest(4);
        theta.rotations[2] = Quat::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.7);
        let base = KinematicTreeParams {
            theta: theta.clone(),
            link_lengths: vec![1.0, 0.5, 2.0],
        };
        theta.root.translation = Vec3::new(0.0, 0.0, 5.0);
        let shifted = KinematicTreeParams {
            theta,
            link_lengths: vec![1.0, 0.5, 2.0],
        };
        let (a, _) = forward_kinematics(&topo, &base).unwrap();
        let (b, _) = forward_kinematics(&topo, &shifted).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert!((*b - *a - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_deformable_topology() {
        let topo = GraphTopology::deformable(2, vec![Link::new(0, 1)], vec![]).unwrap();
        let t = TreeTheta::rest(2);
        assert!(forward_kinematics_raw(&topo, &t, &[1.0]).is_err());
    }
}
