//! Motion graphs: topology, per-frame parameters, and the two link-pose
//! models (kinematic tree and deformable graph).

mod deformable;
mod fit;
mod ik;
mod init;
mod lift;
mod tree;

use alloc::vec;
use alloc::vec::Vec;

pub use deformable::{
    deformable_link_frames, projection_point, ProjectionPoint,
};
pub(crate) use deformable::{link_rotations, projection_ratio};
pub use fit::{fit_kinematic_tree, point_link_objective, TreeFitResult};
pub use ik::{inverse_kinematics, IkOptions, IkResult, IkTarget};
pub use init::{farthest_point_sample, init_deformable, build_up_triangles};
pub use lift::{lift_2d_skeleton, DepthImage, Intrinsics};
pub use tree::{forward_kinematics, forward_kinematics_raw, TreeFrames};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    KinematicTree,
    Deformable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub start: usize,
    pub end: usize,
}

impl Link {
    pub fn new(start: usize, end: usize) -> Self {
        Link { start, end }
    }

    pub fn shares_joint(&self, o: &Link) -> Option<usize> {
        if self.start == o.start || self.start == o.end {
            Some(self.start)
        } else if self.end == o.start || self.end == o.end {
            Some(self.end)
        } else {
            None
        }
    }

    pub fn other(&self, joint: usize) -> usize {
        if joint == self.start {
            self.end
        } else {
            self.start
        }
    }
}

/// Triangle `(link.start, link.end, apex)` whose face normal is the up
/// direction for `link`'s look-at frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpTriangle {
    pub link: usize,
    pub apex: usize,
}

/// Joints and links of a motion graph. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTopology {
    joint_count: usize,
    links: Vec<Link>,
    kind: GraphKind,
    root: usize,
    up_triangles: Vec<UpTriangle>,
    // tree: link indices ordered so every link's start joint is already placed
    link_order: Vec<usize>,
    // deformable: apex joint per link, if any
    apex: Vec<Option<usize>>,
}

impl GraphTopology {
    /// A rooted tree. Links must be oriented parent to child.
    pub fn kinematic_tree(joint_count: usize, links: Vec<Link>, root: usize) -> Result<Self> {
        validate_links(joint_count, &links)?;
        if root >= joint_count {
            return Err(Error::Topology("root index out of range".into()));
        }
        if links.len() + 1 != joint_count {
            return Err(Error::Topology(alloc::format!(
                "a tree over {joint_count} joints needs {} links, got {}",
                joint_count - 1,
                links.len()
            )));
        }
        let mut parent_link = vec![None; joint_count];
        for (i, l) in links.iter().enumerate() {
            if l.end == root {
                return Err(Error::Topology("root joint has a parent link".into()));
            }
            if parent_link[l.end].replace(i).is_some() {
                return Err(Error::Topology(alloc::format!(
                    "joint {} has more than one parent",
                    l.end
                )));
            }
        }
        let mut order = Vec::with_capacity(links.len());
        let mut placed = vec![false; joint_count];
        placed[root] = true;
        let mut frontier = vec![root];
        while let Some(j) = frontier.pop() {
            for (i, l) in links.iter().enumerate() {
                if l.start == j && !placed[l.end] {
                    placed[l.end] = true;
                    order.push(i);
                    frontier.push(l.end);
                }
            }
        }
        if order.len() != links.len() {
            return Err(Error::Topology("tree is not connected to its root".into()));
        }
        Ok(GraphTopology {
            joint_count,
            links,
            kind: GraphKind::KinematicTree,
            root,
            up_triangles: Vec::new(),
            link_order: order,
            apex: Vec::new(),
        })
    }

    pub fn deformable(
        joint_count: usize,
        links: Vec<Link>,
        up_triangles: Vec<UpTriangle>,
    ) -> Result<Self> {
        validate_links(joint_count, &links)?;
        if links.is_empty() {
            return Err(Error::Topology("deformable graph needs at least one link".into()));
        }
        let mut apex = vec![None; links.len()];
        for t in &up_triangles {
            let l = links
                .get(t.link)
                .ok_or_else(|| Error::Topology("up triangle link out of range".into()))?;
            if t.apex >= joint_count || t.apex == l.start || t.apex == l.end {
                return Err(Error::Topology(alloc::format!(
                    "invalid apex {} for link {}",
                    t.apex,
                    t.link
                )));
            }
            if apex[t.link].replace(t.apex).is_some() {
                return Err(Error::Topology(alloc::format!(
                    "link {} has two up triangles",
                    t.link
                )));
            }
        }
        Ok(GraphTopology {
            joint_count,
            links,
            kind: GraphKind::Deformable,
            root: 0,
            up_triangles,
            link_order: Vec::new(),
            apex,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn is_tree(&self) -> bool {
        self.kind == GraphKind::KinematicTree
    }

    /// Root joint (trees only; 0 for deformable graphs).
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn up_triangles(&self) -> &[UpTriangle] {
        &self.up_triangles
    }

    /// Link indices ordered so that every parent link precedes its children.
    pub fn link_order(&self) -> &[usize] {
        &self.link_order
    }

    pub(crate) fn apex(&self, link: usize) -> Option<usize> {
        self.apex.get(link).copied().flatten()
    }

    /// Parent joint of `joint` in a tree.
    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.links.iter().find(|l| l.end == joint).map(|l| l.start)
    }

    /// Number of scalars in one frame's parameters.
    pub fn theta_len(&self) -> usize {
        match self.kind {
            GraphKind::KinematicTree => 7 + 4 * self.joint_count,
            GraphKind::Deformable => 3 * self.joint_count,
        }
    }

    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        match (self.kind, theta) {
            (GraphKind::KinematicTree, Theta::Tree(t)) => {
                if t.rotations.len() != self.joint_count {
                    return Err(Error::mismatch("joint rotations", self.joint_count, t.rotations.len()));
                }
            }
            (GraphKind::Deformable, Theta::Deformable(p)) => {
                if p.len() != self.joint_count {
                    return Err(Error::mismatch("joint positions", self.joint_count, p.len()));
                }
            }
            _ => return Err(Error::Topology("parameters do not match graph kind".into())),
        }
        Ok(())
    }

    pub fn check_phi(&self, lengths: &[f64]) -> Result<()> {
        if self.is_tree() {
            if lengths.len() != self.links.len() {
                return Err(Error::mismatch("link lengths", self.links.len(), lengths.len()));
            }
            if lengths.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::invalid("link lengths must be positive"));
            }
        }
        Ok(())
    }
}

fn validate_links(joint_count: usize, links: &[Link]) -> Result<()> {
    if joint_count == 0 {
        return Err(Error::Topology("graph needs at least one joint".into()));
    }
    for (i, l) in links.iter().enumerate() {
        if l.start >= joint_count || l.end >= joint_count {
            return Err(Error::Topology(alloc::format!("link {i} references a missing joint")));
        }
        if l.start == l.end {
            return Err(Error::Topology(alloc::format!("link {i} is a self-loop")));
        }
    }
    Ok(())
}

/// Per-frame parameters of a kinematic tree: joint rotations and root pose.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeTheta<T = f64> {
    pub rotations: Vec<Quat<T>>,
    pub root: Pose<T>,
}

impl TreeTheta {
    pub fn rest(joint_count: usize) -> Self {
        TreeTheta {
            rotations: vec![Quat::identity(); joint_count],
            root: Pose::identity(),
        }
    }
}

/// Kinematic-tree parameters for one frame plus the static link lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicTreeParams {
    pub theta: TreeTheta,
    pub link_lengths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformableGraphParams {
    pub joint_positions: Vec<Vec3>,
}

impl DeformableGraphParams {
    pub fn validate(&self, topology: &GraphTopology) -> Result<()> {
        if self.joint_positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite joint position"));
        }
        for (i, l) in topology.links().iter().enumerate() {
            if self.joint_positions[l.start].distance(&self.joint_positions[l.end]) <= 1e-9 {
                return Err(Error::DegenerateLink(i));
            }
        }
        Ok(())
    }
}

/// One frame's time-varying graph parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Theta<T = f64> {
    Tree(TreeTheta<T>),
    Deformable(Vec<Vec3<T>>),
}

impl Theta {
    /// Flat layout: tree `[root.q(4), root.t(3), r_0(4), ..]`, deformable
    /// `[n_0(3), n_1(3), ..]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.write_flat(&mut out);
        out
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        match self {
            Theta::Tree(t) => {
                out.extend_from_slice(&t.root.rotation.as_array());
                out.extend_from_slice(&t.root.translation.as_array());
                for q in &t.rotations {
                    out.extend_from_slice(&q.as_array());
                }
            }
            Theta::Deformable(p) => {
                for v in p {
                    out.extend_from_slice(&v.as_array());
                }
            }
        }
    }

    /// Renormalize every quaternion (after an unconstrained update).
    pub fn normalize(&mut self) {
        if let Theta::Tree(t) = self {
            t.root.rotation = t.root.rotation.normalized();
            for q in &mut t.rotations {
                *q = q.normalized();
            }
        }
    }

    pub fn as_tree(&self) -> Option<&TreeTheta> {
        match self {
            Theta::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_deformable(&self) -> Option<&[Vec3]> {
        match self {
            Theta::Deformable(p) => Some(p),
            _ => None,
        }
    }
}

impl<T: Real> Theta<T> {
    pub fn from_flat(topology: &GraphTopology, flat: &[T]) -> Result<Self> {
        if flat.len() != topology.theta_len() {
            return Err(Error::mismatch("theta", topology.theta_len(), flat.len()));
        }
        let q = |s: &[T]| Quat::new(s[0], s[1], s[2], s[3]);
        let v = |s: &[T]| Vec3::new(s[0], s[1], s[2]);
        Ok(match topology.kind() {
            GraphKind::KinematicTree => Theta::Tree(TreeTheta {
                root: Pose::new(q(&flat[0..4]), v(&flat[4..7])),
                rotations: flat[7..].chunks_exact(4).map(q).collect(),
            }),
            GraphKind::Deformable => Theta::Deformable(flat.chunks_exact(3).map(v).collect()),
        })
    }
}

/// Fixed topology plus the static parameters (link lengths; empty for
/// deformable graphs).
#[derive(Clone, Debug, PartialEq)]
pub struct MotionGraph {
    pub topology: GraphTopology,
    pub link_lengths: Vec<f64>,
}

impl MotionGraph {
    pub fn new(topology: GraphTopology, link_lengths: Vec<f64>) -> Result<Self> {
        if topology.is_tree() {
            topology.check_phi(&link_lengths)?;
        } else if !link_lengths.is_empty() {
            return Err(Error::invalid("a deformable graph has no link lengths"));
        }
        Ok(MotionGraph {
            topology,
            link_lengths,
        })
    }

    pub fn joint_positions(&self, theta: &Theta) -> Result<Vec<Vec3>> {
        self.topology.check_theta(theta)?;
        joint_positions(&self.topology, theta, &self.link_lengths)
    }
}

/// Time-varying parameters for every frame plus the canonical frame index.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<Theta>,
    pub canonical_index: usize,
}

impl MotionSequence {
    /// Every frame starts from the canonical parameters.
    pub fn propagate(canonical: Theta, frames: usize, canonical_index: usize) -> Result<Self> {
        if frames == 0 || canonical_index >= frames {
            return Err(Error::invalid("canonical index outside the frame range"));
        }
        Ok(MotionSequence {
            frames: vec![canonical; frames],
            canonical_index,
        })
    }

    pub fn canonical(&self) -> &Theta {
        &self.frames[self.canonical_index]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Joint positions for a frame, via forward kinematics for trees.
pub fn joint_positions<T: Real>(
    topology: &GraphTopology,
    theta: &Theta<T>,
    link_lengths: &[T],
) -> Result<Vec<Vec3<T>>> {
    match theta {
        Theta::Tree(t) => Ok(tree::forward_kinematics_raw(topology, t, link_lengths)?.joints),
        Theta::Deformable(p) => {
            if p.len() != topology.joint_count() {
                return Err(Error::mismatch("joint positions", topology.joint_count(), p.len()));
            }
            Ok(p.clone())
        }
    }
}

/// Segments `(start, end)` of every link.
pub fn link_segments<T: Real>(topology: &GraphTopology, joints: &[Vec3<T>]) -> Vec<(Vec3<T>, Vec3<T>)> {
    topology
        .links()
        .iter()
        .map(|l| (joints[l.start], joints[l.end]))
        .collect()
}

/// Closest point on segment `[a, b]` to `p` and its parameter in `[0, 1]`.
pub fn closest_on_segment<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> (Vec3<T>, T) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2.value() <= 0.0 {
        return (a, T::zero());
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab.scale(t), t)
}

pub fn point_segment_distance<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> T {
    let (c, _) = closest_on_segment(p, a, b);
    (p - c).norm()
}
