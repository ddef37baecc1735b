//! Motion-graph initialization from a dataset's canonical frame.

use mbgs_core::geometry::{rotation_between, Pose, Quat, Vec3};
use mbgs_core::graph::{
    fit_kinematic_tree, init_deformable, lift_2d_skeleton, DeformableGraphParams, GraphTopology,
    KinematicTreeParams, MotionGraph, Theta, TreeTheta,
};

use crate::error::{Error, Result};
use crate::frames::Dataset;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    /// Joint count of a deformable graph.
    pub joints: usize,
    /// Neighbours per joint when linking a deformable graph.
    pub knn: usize,
    pub tree_iters: usize,
    pub tree_lr: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions { joints: 32, knn: 4, tree_iters: 300, tree_lr: 1e-2 }
    }
}

/// Tree parameters whose joints land on `joints`: each joint frame points
/// its x axis at its first child (leaves inherit the parent frame) and link
/// lengths are the joint distances. Siblings share their parent's direction,
/// so only the first child of a branching joint is matched exactly.
pub fn tree_from_joint_positions(topology: &GraphTopology, joints: &[Vec3]) -> Result<KinematicTreeParams> {
    if !topology.is_tree() {
        return Err(Error::Invalid("a kinematic tree template is required".into()));
    }
    if joints.len() != topology.joint_count() {
        return Err(Error::Invalid(format!(
            "{} joint positions for a {}-joint tree",
            joints.len(),
            topology.joint_count()
        )));
    }
    let n = topology.joint_count();
    let mut world: Vec<Option<Quat>> = vec![None; n];
    for link in topology.links() {
        if world[link.start].is_none() {
            let d = joints[link.end] - joints[link.start];
            world[link.start] = d.try_normalized(1e-12).map(|d| rotation_between(Vec3::X, d));
        }
    }
    let root = topology.root();
    let mut frames = vec![Quat::identity(); n];
    frames[root] = world[root].unwrap_or_else(Quat::identity);
    let mut theta = TreeTheta::rest(n);
    theta.root = Pose::from_translation(joints[root]);
    theta.rotations[root] = frames[root];
    let mut lengths = vec![0.0; topology.link_count()];
    for &li in topology.link_order() {
        let link = topology.links()[li];
        frames[link.end] = world[link.end].unwrap_or(frames[link.start]);
        theta.rotations[link.end] = (frames[link.start].conj() * frames[link.end]).normalized();
        lengths[li] = joints[link.start].distance(&joints[link.end]).max(1e-6);
    }
    Ok(KinematicTreeParams { theta, link_lengths: lengths })
}

fn init_tree(ds: &Dataset, template: &crate::formats::GraphSpec, opts: &InitOptions) -> Result<(MotionGraph, Theta)> {
    let (graph, template_theta) = template.decode()?;
    let topo = &graph.topology;
    let mut joints = graph.joint_positions(&template_theta)?;
    if let (Some(kps), Some(depth), Some(cam)) = (&ds.keypoints, &ds.depth, &ds.camera) {
        let c = ds.frames.canonical_index;
        let kp = &kps[c];
        if kp.len() != joints.len() {
            return Err(Error::Invalid(format!("{} keypoints for a {}-joint skeleton", kp.len(), joints.len())));
        }
        let pixels: Vec<(f64, f64)> = kp.iter().map(|k| (k.x, k.y)).collect();
        let lifted = lift_2d_skeleton(&pixels, &depth[c], &cam.intrinsics())?;
        let to_world = cam.pose.inverse();
        for ((j, l), k) in joints.iter_mut().zip(lifted).zip(kp) {
            if let (Some(p), true) = (l, k.is_valid()) {
                *j = to_world.transform_point(p);
            }
        }
    }
    let initial = tree_from_joint_positions(topo, &joints)?;
    let fitted = fit_kinematic_tree(topo, &initial, &ds.frames.canonical().positions, opts.tree_iters, opts.tree_lr)?;
    let graph = MotionGraph::new(graph.topology.clone(), fitted.params.link_lengths)?;
    Ok((graph, Theta::Tree(fitted.params.theta)))
}

/// A kinematic tree when the manifest carries a skeleton template (lifted
/// from keypoints and depth when available, then fitted to the canonical
/// cloud), a farthest-point deformable graph otherwise.
pub fn init_graph(ds: &Dataset, opts: &InitOptions) -> Result<(MotionGraph, Theta)> {
    match &ds.manifest.skeleton {
        Some(template) => init_tree(ds, template, opts),
        None => {
            let (topology, DeformableGraphParams { joint_positions }) =
                init_deformable(&ds.frames.canonical().positions, opts.joints, opts.knn)?;
            Ok((MotionGraph::new(topology, vec![])?, Theta::Deformable(joint_positions)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mbgs_core::graph::{forward_kinematics, Link};

    #[test]
    fn tree_from_positions_reproduces_a_chain() {
        let topo = GraphTopology::kinematic_tree(4, vec![Link::new(0, 1), Link::new(1, 2), Link::new(2, 3)], 0).unwrap();
        let joints = vec![Vec3::new(0.5, 0.0, 1.0), Vec3::new(1.2, 0.3, 1.0), Vec3::new(1.2, 1.1, 0.6), Vec3::new(0.1, 1.4, 0.2)];
        let p = tree_from_joint_positions(&topo, &joints).unwrap();
        let (got, _) = forward_kinematics(&topo, &p).unwrap();
        for (a, b) in got.iter().zip(&joints) {
            assert!(a.distance(b) < 1e-12, "{a:?} vs {b:?}");
        }
    }
}
