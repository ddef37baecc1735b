//! Binding splats to a motion graph and deforming them.
//!
//! Every frame pair (canonical, t) is reduced to a flat vector of per-link
//! features, laid out by [`FeatureLayout`]: canonical link segments, kernel
//! radii, and a per-link motion (a rigid relative pose for kinematic trees;
//! the moved segment plus the relative look-at rotation for deformable
//! graphs). Painting and blending read only from that vector, which is what
//! lets the optimizer differentiate a splat without re-running the graph.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{blend_weighted, check_simplex, dq_blend, pose_to_dq, DualQuat, Pose, Quat, Vec3};
use crate::graph::{
    forward_kinematics_raw, link_rotations, point_segment_distance, projection_ratio,
    GraphTopology, MotionGraph, Theta,
};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat {
    pub pose: Pose,
    pub scale: Vec3,
    pub opacity: f64,
    pub color: [f64; 3],
    pub instance_id: u32,
}

impl Splat {
    /// A small, opaque, grey splat at `position`.
    pub fn point(position: Vec3) -> Self {
        Splat {
            pose: Pose::from_translation(position),
            scale: Vec3::new(0.01, 0.01, 0.01),
            opacity: 1.0,
            color: [0.5, 0.5, 0.5],
            instance_id: 0,
        }
    }

    pub fn position(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.x > 0.0 && self.scale.y > 0.0 && self.scale.z > 0.0) {
            return Err(Error::invalid("splat scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid("splat opacity outside [0, 1]"));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("splat color outside [0, 1]"));
        }
        if !self.pose.translation.is_finite() || !self.pose.rotation.is_unit(1e-9) {
            return Err(Error::invalid("splat pose is not a valid rigid transform"));
        }
        Ok(())
    }
}

/// One-hot instance assignment of every splat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMatrix {
    ids: Vec<usize>,
    count: usize,
}

impl InstanceMatrix {
    pub fn from_splats(splats: &[Splat], count: usize) -> Result<Self> {
        let ids: Vec<usize> = splats.iter().map(|s| s.instance_id as usize).collect();
        if let Some(bad) = ids.iter().find(|&&i| i >= count) {
            return Err(Error::invalid(alloc::format!(
                "instance id {bad} outside 0..{count}"
            )));
        }
        Ok(InstanceMatrix { ids, count })
    }

    pub fn instance_count(&self) -> usize {
        self.count
    }

    pub fn instance(&self, splat: usize) -> usize {
        self.ids[splat]
    }

    pub fn row(&self, splat: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.count];
        r[self.ids[splat]] = 1.0;
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PaintMode {
    /// `softmax(exp(-gamma * d))`
    #[default]
    SoftmaxOfKernel,
    /// `exp(-gamma * d) / sum`
    NormalizedKernel,
}

/// Index arithmetic for the flat per-link feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FeatureLayout {
    pub links: usize,
    pub rigid: bool,
}

impl FeatureLayout {
    pub fn new(topology: &GraphTopology) -> Self {
        FeatureLayout {
            links: topology.link_count(),
            rigid: topology.is_tree(),
        }
    }

    /// Canonical segment `(s0, e0)`, six values.
    pub fn segment(&self, link: usize) -> usize {
        6 * link
    }

    pub fn gamma(&self, link: usize) -> usize {
        6 * self.links + link
    }

    /// Rigid: rotation (4) and translation (3). Deformable: moved segment
    /// `(st, et)` (6) and the relative rotation (4).
    pub fn motion(&self, link: usize) -> usize {
        7 * self.links + self.motion_stride() * link
    }

    pub fn motion_stride(&self) -> usize {
        if self.rigid {
            7
        } else {
            10
        }
    }

    pub fn len(&self) -> usize {
        self.motion(self.links)
    }
}

/// Flat link features of one (canonical, t) frame pair, plus the joints of
/// both frames.
pub(crate) struct LinkFeatures<T> {
    pub flat: Vec<T>,
    pub joints_0: Vec<Vec3<T>>,
    pub joints_t: Vec<Vec3<T>>,
}

pub(crate) fn link_features<T: Real>(
    topology: &GraphTopology,
    theta_0: &Theta<T>,
    theta_t: &Theta<T>,
    link_lengths: &[T],
    gammas: &[T],
) -> Result<LinkFeatures<T>> {
    let layout = FeatureLayout::new(topology);
    if gammas.len() != layout.links {
        return Err(Error::mismatch("gammas", layout.links, gammas.len()));
    }
    let mut flat = Vec::with_capacity(layout.len());
    let (joints_0, joints_t, motions) = match (theta_0, theta_t) {
        (Theta::Tree(a), Theta::Tree(b)) => {
            let f0 = forward_kinematics_raw(topology, a, link_lengths)?;
            let ft = forward_kinematics_raw(topology, b, link_lengths)?;
            let mut m = Vec::with_capacity(7 * layout.links);
            for (p0, pt) in f0.link_poses.iter().zip(&ft.link_poses) {
                let rel = *pt * p0.inverse();
                m.extend_from_slice(&quat_array(&rel.rotation));
                m.extend_from_slice(&rel.translation.as_array());
            }
            (f0.joints, ft.joints, m)
        }
        (Theta::Deformable(a), Theta::Deformable(b)) => {
            let j = topology.joint_count();
            if a.len() != j || b.len() != j {
                return Err(Error::mismatch("joint positions", j, a.len().min(b.len())));
            }
            let rots = link_rotations(topology, a, b)?;
            let mut m = Vec::with_capacity(10 * layout.links);
            for (l, (r0, rt)) in topology.links().iter().zip(rots) {
                m.extend_from_slice(&b[l.start].as_array());
                m.extend_from_slice(&b[l.end].as_array());
                m.extend_from_slice(&quat_array(&(rt * r0.conj())));
            }
            (a.clone(), b.clone(), m)
        }
        _ => return Err(Error::Topology("parameters do not match graph kind".into())),
    };
    for l in topology.links() {
        flat.extend_from_slice(&joints_0[l.start].as_array());
        flat.extend_from_slice(&joints_0[l.end].as_array());
    }
    flat.extend_from_slice(gammas);
    flat.extend_from_slice(&motions);
    Ok(LinkFeatures {
        flat,
        joints_0,
        joints_t,
    })
}

fn quat_array<T: Real>(q: &Quat<T>) -> [T; 4] {
    [q.w, q.x, q.y, q.z]
}

fn read_vec<T: Real>(get: &mut impl FnMut(usize) -> T, at: usize) -> Vec3<T> {
    Vec3::new(get(at), get(at + 1), get(at + 2))
}

fn read_quat<T: Real>(get: &mut impl FnMut(usize) -> T, at: usize) -> Quat<T> {
    Quat::new(get(at), get(at + 1), get(at + 2), get(at + 3))
}

pub(crate) fn read_segment<T: Real>(
    layout: &FeatureLayout,
    link: usize,
    get: &mut impl FnMut(usize) -> T,
) -> (Vec3<T>, Vec3<T>) {
    let o = layout.segment(link);
    (read_vec(get, o), read_vec(get, o + 3))
}

/// Rigid motion link `link` applies to a splat at canonical position `x0`.
pub(crate) fn link_transform<T: Real>(
    layout: &FeatureLayout,
    link: usize,
    x0: Vec3<T>,
    get: &mut impl FnMut(usize) -> T,
) -> Pose<T> {
    let o = layout.motion(link);
    if layout.rigid {
        return Pose::new(read_quat(get, o), read_vec(get, o + 4));
    }
    let (s0, e0) = read_segment(layout, link, get);
    let st = read_vec(get, o);
    let et = read_vec(get, o + 3);
    let q = read_quat(get, o + 6);
    let r = projection_ratio(x0, s0, e0);
    let n0 = s0 + (e0 - s0).scale(r);
    let nt = st + (et - st).scale(r);
    Pose::new(q, nt - q.rotate(n0))
}

/// Weights from scaled distances `a_i = gamma_i * d_i`.
pub(crate) fn kernel_weights<T: Real>(scaled: &[T], mode: PaintMode) -> Result<Vec<T>> {
    if scaled.is_empty() {
        return Err(Error::InvalidWeights("no links to paint".into()));
    }
    let raw: Vec<T> = match mode {
        PaintMode::SoftmaxOfKernel => scaled.iter().map(|a| (-*a).exp().exp()).collect(),
        PaintMode::NormalizedKernel => {
            let m = scaled.iter().map(|a| a.value()).fold(f64::INFINITY, f64::min);
            if !m.is_finite() {
                return Err(Error::InvalidWeights("every link is infinitely far".into()));
            }
            scaled.iter().map(|a| (-(*a - m)).exp()).collect()
        }
    };
    let mut sum = T::zero();
    for r in &raw {
        sum = sum + *r;
    }
    Ok(raw.into_iter().map(|r| r / sum).collect())
}

/// Links that take part in a splat's blend: all of them, or the `top_k` with
/// the largest kernel values (smallest `gamma * d`, lower index on ties),
/// returned in ascending order.
pub(crate) fn select_links(scaled: &[f64], top_k: Option<usize>) -> Vec<usize> {
    let n = scaled.len();
    match top_k {
        Some(k) if k < n => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| scaled[a].total_cmp(&scaled[b]).then(a.cmp(&b)));
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

/// Paint one splat from the feature vector. Link selection reads plain
/// `values`; only the selected links are read through `get`. Returns
/// `(link, weight)` pairs in ascending link order.
pub(crate) fn paint_from_features<T: Real>(
    layout: &FeatureLayout,
    x0: Vec3<T>,
    values: &[f64],
    mode: PaintMode,
    top_k: Option<usize>,
    get: &mut impl FnMut(usize) -> T,
) -> Result<Vec<(usize, T)>> {
    let xv = x0.value();
    let mut val = |i: usize| values[i];
    let scaled_values: Vec<f64> = (0..layout.links)
        .map(|l| {
            let (s, e) = read_segment(layout, l, &mut val);
            values[layout.gamma(l)] * point_segment_distance(xv, s, e)
        })
        .collect();
    let selected = select_links(&scaled_values, top_k);
    let scaled: Vec<T> = selected
        .iter()
        .map(|&l| {
            let (s, e) = read_segment(layout, l, get);
            get(layout.gamma(l)) * point_segment_distance(x0, s, e)
        })
        .collect();
    let w = kernel_weights(&scaled, mode)?;
    Ok(selected.into_iter().zip(w).collect())
}

/// Blend link motions for a splat. Zero weights are dropped; a single
/// remaining link returns its transform unchanged.
pub(crate) fn blend_from_features<T: Real>(
    layout: &FeatureLayout,
    x0: Vec3<T>,
    entries: &[(usize, T)],
    get: &mut impl FnMut(usize) -> T,
) -> Result<Pose<T>> {
    let live: Vec<&(usize, T)> = entries.iter().filter(|(_, w)| w.value() > 0.0).collect();
    if live.len() == 1 {
        return Ok(link_transform(layout, live[0].0, x0, get));
    }
    let items: Vec<(T, DualQuat<T>)> = live
        .iter()
        .map(|(l, w)| (*w, DualQuat::from_pose(&link_transform(layout, *l, x0, get))))
        .collect();
    blend_weighted(&items)
}

/// Per-splat probability vectors over links, painted at the canonical frame,
/// together with the kernel radii that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPainting {
    pub gammas: Vec<f64>,
    pub mode: PaintMode,
    pub top_k: Option<usize>,
    weights: Vec<Vec<(usize, f64)>>,
}

impl WeightPainting {
    pub fn paint(
        graph: &MotionGraph,
        canonical: &Theta,
        positions: &[Vec3],
        gammas: Vec<f64>,
        mode: PaintMode,
        top_k: Option<usize>,
    ) -> Result<Self> {
        check_gammas(&gammas, graph.topology.link_count())?;
        if top_k == Some(0) {
            return Err(Error::invalid("top_k must be positive"));
        }
        graph.topology.check_theta(canonical)?;
        let layout = FeatureLayout::new(&graph.topology);
        let feats = link_features(&graph.topology, canonical, canonical, &graph.link_lengths, &gammas)?;
        let mut get = |i: usize| feats.flat[i];
        let weights = positions
            .iter()
            .map(|x| paint_from_features(&layout, *x, &feats.flat, mode, top_k, &mut get))
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightPainting {
            gammas,
            mode,
            top_k,
            weights,
        })
    }

    /// Rebuild from stored sparse weights, checking every row is on the
    /// simplex.
    pub fn from_parts(
        gammas: Vec<f64>,
        mode: PaintMode,
        top_k: Option<usize>,
        weights: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let links = gammas.len();
        check_gammas(&gammas, links)?;
        for row in &weights {
            if row.iter().any(|(l, _)| *l >= links) {
                return Err(Error::InvalidWeights("weight refers to a missing link".into()));
            }
            let w: Vec<f64> = row.iter().map(|e| e.1).collect();
            check_simplex(&w, 1e-12)?;
        }
        Ok(WeightPainting {
            gammas,
            mode,
            top_k,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn link_count(&self) -> usize {
        self.gammas.len()
    }

    /// Sparse `(link, weight)` entries of splat `i`.
    pub fn weights(&self, i: usize) -> &[(usize, f64)] {
        &self.weights[i]
    }

    pub fn dense(&self, i: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.gammas.len()];
        for (l, w) in &self.weights[i] {
            d[*l] = *w;
        }
        d
    }
}

fn check_gammas(gammas: &[f64], links: usize) -> Result<()> {
    if links == 0 {
        return Err(Error::invalid("cannot paint weights without links"));
    }
    if gammas.len() != links {
        return Err(Error::mismatch("gammas", links, gammas.len()));
    }
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid("gammas must be positive"));
    }
    Ok(())
}

/// Probability vector over links for one canonical position.
pub fn paint_weights(
    x0: Vec3,
    segments: &[(Vec3, Vec3)],
    gammas: &[f64],
    mode: PaintMode,
    top_k: Option<usize>,
) -> Result<Vec<f64>> {
    check_gammas(gammas, segments.len())?;
    let d: Vec<f64> = segments
        .iter()
        .map(|(s, e)| point_segment_distance(x0, *s, *e))
        .collect();
    weights_from_distances(&d, gammas, mode, top_k)
}

/// Dense weights from precomputed point-to-link distances (which may be
/// infinite).
pub fn weights_from_distances(
    distances: &[f64],
    gammas: &[f64],
    mode: PaintMode,
    top_k: Option<usize>,
) -> Result<Vec<f64>> {
    check_gammas(gammas, distances.len())?;
    let scaled: Vec<f64> = distances.iter().zip(gammas).map(|(d, g)| d * g).collect();
    let sel = select_links(&scaled, top_k);
    let sub: Vec<f64> = sel.iter().map(|&i| scaled[i]).collect();
    let w = kernel_weights(&sub, mode)?;
    let mut out = vec![0.0; distances.len()];
    for (i, v) in sel.into_iter().zip(w) {
        out[i] = v;
    }
    Ok(out)
}

/// Kernel radius shared by every link: the reciprocal of the mean distance
/// from each link's midpoint to the nearest other link midpoint (or of the
/// link length when there is a single link).
pub fn default_gammas(topology: &GraphTopology, joints: &[Vec3]) -> Result<Vec<f64>> {
    let mids: Vec<Vec3> = topology
        .links()
        .iter()
        .map(|l| joints[l.start].lerp(&joints[l.end], 0.5))
        .collect();
    let spacing = match mids.len() {
        0 => return Err(Error::invalid("graph has no links")),
        1 => {
            let l = topology.links()[0];
            joints[l.start].distance(&joints[l.end])
        }
        n => {
            let mut sum = 0.0;
            for i in 0..n {
                let mut best = f64::INFINITY;
                for j in 0..n {
                    if i != j {
                        best = best.min(mids[i].distance(&mids[j]));
                    }
                }
                sum += best;
            }
            sum / n as f64
        }
    };
    if !(spacing > 1e-12 && spacing.is_finite()) {
        return Err(Error::invalid("links are too close to derive a kernel radius"));
    }
    Ok(vec![1.0 / spacing; topology.link_count()])
}

/// Blend relative link transforms with a probability vector.
pub fn blend_motion(relative_link_transforms: &[Pose], weights: &[f64]) -> Result<Pose> {
    if relative_link_transforms.len() != weights.len() {
        return Err(Error::mismatch("blend weights", relative_link_transforms.len(), weights.len()));
    }
    check_simplex(weights, 1e-9)?;
    let live: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    if live.len() == 1 {
        return Ok(relative_link_transforms[live[0]]);
    }
    let dqs: Vec<_> = relative_link_transforms.iter().map(pose_to_dq).collect();
    dq_blend(&dqs, weights)
}

/// Move canonical splats to frame t. Only poses change.
pub fn deform_splats(
    graph: &MotionGraph,
    theta_0: &Theta,
    theta_t: &Theta,
    splats: &[Splat],
    painting: &WeightPainting,
) -> Result<Vec<Splat>> {
    let topo = &graph.topology;
    topo.check_theta(theta_0)?;
    topo.check_theta(theta_t)?;
    if painting.len() != splats.len() {
        return Err(Error::mismatch("painted splats", splats.len(), painting.len()));
    }
    if painting.link_count() != topo.link_count() {
        return Err(Error::Topology("painting was made for a different graph".into()));
    }
    if theta_0 == theta_t {
        return Ok(splats.to_vec());
    }
    let layout = FeatureLayout::new(topo);
    let feats = link_features(topo, theta_0, theta_t, &graph.link_lengths, &painting.gammas)?;
    let mut get = |i: usize| feats.flat[i];
    splats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = blend_from_features(&layout, s.position(), painting.weights(i), &mut get)?;
            let mut out = *s;
            out.pose = t * s.pose;
            Ok(out)
        })
        .collect()
}

/// Deformed positions only; the cheap path used by losses and previews.
pub fn deform_positions(
    graph: &MotionGraph,
    theta_0: &Theta,
    theta_t: &Theta,
    positions: &[Vec3],
    painting: &WeightPainting,
) -> Result<Vec<Vec3>> {
    let topo = &graph.topology;
    topo.check_theta(theta_0)?;
    topo.check_theta(theta_t)?;
    if painting.len() != positions.len() {
        return Err(Error::mismatch("painted splats", positions.len(), painting.len()));
    }
    if theta_0 == theta_t {
        return Ok(positions.to_vec());
    }
    let layout = FeatureLayout::new(topo);
    let feats = link_features(topo, theta_0, theta_t, &graph.link_lengths, &painting.gammas)?;
    let mut get = |i: usize| feats.flat[i];
    positions
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let t = blend_from_features(&layout, *x, painting.weights(i), &mut get)?;
            Ok(t.transform_point(*x))
        })
        .collect()
}
