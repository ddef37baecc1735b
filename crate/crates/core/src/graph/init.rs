//! Deformable-graph initialization from a point cloud.

use alloc::vec;
use alloc::vec::Vec;

use super::{DeformableGraphParams, GraphTopology, Link, UpTriangle};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Greedy farthest-point sampling. The point nearest the centroid is used as
/// an anchor: the first joint is the point farthest from it, and each further
/// pick maximizes the distance to the joints already picked. Ties go to the
/// lowest index.
pub fn farthest_point_sample(cloud: &[Vec3], count: usize) -> Result<Vec<usize>> {
    if count > cloud.len() {
        return Err(Error::invalid(alloc::format!(
            "cannot sample {count} joints from {} points",
            cloud.len()
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut centroid = Vec3::ZERO;
    for p in cloud {
        centroid += *p;
    }
    centroid = centroid * (1.0 / cloud.len() as f64);
    let anchor = argmin(cloud.iter().map(|p| p.distance(&centroid)));
    let mut nearest: Vec<f64> = cloud.iter().map(|p| p.distance(&cloud[anchor])).collect();
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let mut best = 0;
        for (i, d) in nearest.iter().enumerate() {
            if *d > nearest[best] {
                best = i;
            }
        }
        if picked.is_empty() {
            // the anchor only selects the start; forget it
            nearest.fill(f64::INFINITY);
        }
        picked.push(best);
        for (i, p) in cloud.iter().enumerate() {
            let d = p.distance(&cloud[best]);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    Ok(picked)
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in it.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Farthest-point joints, symmetrized k-nearest-neighbour links (repaired to
/// one component with minimum-spanning edges) and greedily paired up
/// triangles.
pub fn init_deformable(
    cloud: &[Vec3],
    joint_count: usize,
    neighbors: usize,
) -> Result<(GraphTopology, DeformableGraphParams)> {
    if joint_count < 2 {
        return Err(Error::invalid("a deformable graph needs at least 2 joints"));
    }
    if neighbors == 0 {
        return Err(Error::invalid("neighbour count must be at least 1"));
    }
    let picked = farthest_point_sample(cloud, joint_count)?;
    let joints: Vec<Vec3> = picked.iter().map(|&i| cloud[i]).collect();
    for i in 0..joints.len() {
        for j in 0..i {
            if joints[i].distance(&joints[j]) <= 1e-9 {
                return Err(Error::invalid("point cloud has too few distinct points"));
            }
        }
    }
    let links = knn_links(&joints, neighbors);
    let triangles = build_up_triangles(&links, &joints);
    let topo = GraphTopology::deformable(joint_count, links, triangles)?;
    Ok((topo, DeformableGraphParams { joint_positions: joints }))
}

fn knn_links(joints: &[Vec3], k: usize) -> Vec<Link> {
    let n = joints.len();
    let k = k.min(n - 1);
    let mut edges = Vec::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (joints[i].distance(&joints[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            edges.push(Link::new(i.min(j), i.max(j)));
        }
    }
    edges.sort();
    edges.dedup();

    // connect stray components with the shortest bridging edges (Kruskal)
    let mut uf = UnionFind::new(n);
    for e in &edges {
        uf.union(e.start, e.end);
    }
    if uf.components() > 1 {
        let mut all: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                all.push((joints[i].distance(&joints[j]), i, j));
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        for (_, i, j) in all {
            if uf.union(i, j) {
                edges.push(Link::new(i, j));
                if uf.components() == 1 {
                    break;
                }
            }
        }
        edges.sort();
    }
    edges
}

fn sine_between(a: &Link, b: &Link, joints: &[Vec3]) -> f64 {
    let shared = match a.shares_joint(b) {
        Some(s) => s,
        None => return 0.0,
    };
    let u = joints[a.other(shared)] - joints[shared];
    let v = joints[b.other(shared)] - joints[shared];
    let denom = u.norm() * v.norm();
    if denom <= 0.0 {
        return 0.0;
    }
    u.cross(&v).norm() / denom
}

// Sine threshold for pairing two links into a triangle.
const MIN_PAIR_SINE: f64 = 1e-3;

/// Pair links sharing a joint into triangles. Unpaired links are first
/// matched among themselves (best sine first, then lowest index); a link left
/// over borrows its best neighbour. Links with no non-collinear neighbour get
/// no triangle and use the fallback up direction.
pub fn build_up_triangles(links: &[Link], joints: &[Vec3]) -> Vec<UpTriangle> {
    let n = links.len();
    let mut apex: Vec<Option<usize>> = vec![None; n];
    let best_partner = |l: usize, apex: &[Option<usize>], only_free: bool| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for m in 0..n {
            if m == l || (only_free && apex[m].is_some()) {
                continue;
            }
            if links[l].shares_joint(&links[m]).is_none() {
                continue;
            }
            let s = sine_between(&links[l], &links[m], joints);
            if s < MIN_PAIR_SINE {
                continue;
            }
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some((m, s));
            }
        }
        best.map(|b| b.0)
    };
    let far = |l: usize, m: usize| -> usize {
        let shared = links[l].shares_joint(&links[m]).expect("adjacent");
        links[m].other(shared)
    };
    for l in 0..n {
        if apex[l].is_some() {
            continue;
        }
        if let Some(m) = best_partner(l, &apex, true) {
            apex[l] = Some(far(l, m));
            apex[m] = Some(far(m, l));
        }
    }
    for l in 0..n {
        if apex[l].is_none() {
            if let Some(m) = best_partner(l, &apex, false) {
                apex[l] = Some(far(l, m));
            }
        }
    }
    apex.iter()
        .enumerate()
        .filter_map(|(link, a)| a.map(|apex| UpTriangle { link, apex }))
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            count: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        self.count -= 1;
        true
    }

    fn components(&self) -> usize {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_corners_all_selected() {
        let c = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let mut s = farthest_point_sample(&c, 4).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    #[test]
    fn line_picks_extremes() {
        let c: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64 / 99.0, 0.0, 0.0)).collect();
        let (_, params) = init_deformable(&c, 2, 4).unwrap();
        let mut xs: Vec<f64> = params.joint_positions.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![0.0, 1.0]);
    }

    #[test]
    fn too_few_joints_or_points() {
        let c = [Vec3::ZERO, Vec3::X];
        assert!(init_deformable(&c, 1, 4).is_err());
        assert!(init_deformable(&c, 3, 4).is_err());
        assert!(init_deformable(&c, 2, 0).is_err());
    }

    #[test]
    fn knn_graph_is_connected() {
        // two far-apart clusters; k = 1 links only within clusters
        let mut c = Vec::new();
        for i in 0..5 {
            c.push(Vec3::new(i as f64 * 0.1, (i % 2) as f64 * 0.05, 0.0));
            c.push(Vec3::new(10.0 + i as f64 * 0.1, (i % 2) as f64 * 0.05, 0.0));
        }
        let (topo, _) = init_deformable(&c, 10, 1).unwrap();
        let mut uf = UnionFind::new(10);
        for l in topo.links() {
            uf.union(l.start, l.end);
        }
        assert_eq!(uf.components(), 1);
        let mut sorted = topo.links().to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), topo.link_count());
    }

    #[test]
    fn every_link_of_a_fan_gets_a_triangle() {
        let joints = [
            Vec3::ZERO,
            Vec3::X,
            Vec3::Y,
            Vec3::new(-1.0, 0.2, 0.0),
        ];
        let links = vec![Link::new(0, 1), Link::new(0, 2), Link::new(0, 3)];
        let t = build_up_triangles(&links, &joints);
        assert_eq!(t.len(), 3);
        for tri in &t {
            let l = links[tri.link];
            assert!(tri.apex != l.start && tri.apex != l.end);
        }
    }
}
