//! Fitting a kinematic-tree template to a skeleton point cloud.

use alloc::vec::Vec;

use super::{point_segment_distance, tree, GraphTopology, KinematicTreeParams, Theta};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct TreeFitResult {
    pub params: KinematicTreeParams,
    pub objective: f64,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn objective<T: Real>(topology: &GraphTopology, flat: &[T], cloud: &[Vec3]) -> Result<T> {
    let n_theta = topology.theta_len();
    let theta = match Theta::from_flat(topology, &flat[..n_theta])? {
        Theta::Tree(t) => t,
        Theta::Deformable(_) => return Err(Error::Topology("expected a kinematic tree".into())),
    };
    let frames = tree::forward_kinematics_raw(topology, &theta, &flat[n_theta..])?;
    let segs = super::link_segments(topology, &frames.joints);
    let mut sum = T::zero();
    for p in cloud {
        let p = Vec3::from_f64(*p);
        let mut best: Option<T> = None;
        for (a, b) in &segs {
            let d = point_segment_distance(p, *a, *b);
            best = Some(match best {
                Some(m) => m.min(d),
                None => d,
            });
        }
        sum = sum + best.unwrap_or_else(T::zero);
    }
    Ok(sum / cloud.len() as f64)
}

/// Mean distance from each cloud point to its nearest tree link.
pub fn point_link_objective(
    topology: &GraphTopology,
    params: &KinematicTreeParams,
    cloud: &[Vec3],
) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::invalid("empty skeleton cloud"));
    }
    objective(topology, &flatten(params), cloud)
}

fn flatten(p: &KinematicTreeParams) -> Vec<f64> {
    let mut flat = Theta::Tree(p.theta.clone()).to_flat();
    flat.extend_from_slice(&p.link_lengths);
    flat
}

fn unflatten(topology: &GraphTopology, flat: &[f64]) -> Result<KinematicTreeParams> {
    let n = topology.theta_len();
    let mut theta = Theta::from_flat(topology, &flat[..n])?;
    theta.normalize();
    match theta {
        Theta::Tree(theta) => Ok(KinematicTreeParams {
            theta,
            link_lengths: flat[n..].to_vec(),
        }),
        Theta::Deformable(_) => Err(Error::Topology("expected a kinematic tree".into())),
    }
}

/// Adam-style gradient descent on the mean point-to-link distance. The
/// objective is nonsmooth wherever the nearest link changes, so the learning
/// rate `step` decays linearly to 1% over the run and the best parameters
/// seen are returned. `history` holds the best objective after every
/// iteration and is therefore non-increasing. Rotations, root pose and link
/// lengths all move.
pub fn fit_kinematic_tree(
    topology: &GraphTopology,
    initial: &KinematicTreeParams,
    cloud: &[Vec3],
    iters: usize,
    step: f64,
) -> Result<TreeFitResult> {
    if cloud.is_empty() {
        return Err(Error::invalid("empty skeleton cloud"));
    }
    if !topology.is_tree() {
        return Err(Error::Topology("fitting needs a kinematic tree".into()));
    }
    topology.check_phi(&initial.link_lengths)?;
    let mut x = flatten(initial);
    let mut best = (objective(topology, &x, cloud)?, x.clone());
    if !best.0.is_finite() {
        return Err(Error::Optimization("objective is not finite".into()));
    }
    let mut history = alloc::vec![best.0];
    let mut adam = crate::optimize::Adam::new(x.len(), step);
    let mut tape = Tape::new();
    for it in 0..iters {
        tape.clear();
        let vars = tape.vars(&x);
        let out = objective(topology, &vars, cloud)?;
        let f = out.value();
        if !f.is_finite() {
            return Err(Error::Optimization("objective diverged".into()));
        }
        if f < best.0 {
            best = (f, x.clone());
        }
        history.push(best.0);
        if f <= 0.0 {
            break;
        }
        let g = tape.gradient(out, &vars);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimization("gradient is not finite".into()));
        }
        adam.lr = step * (1.0 - 0.99 * it as f64 / iters as f64);
        adam.step_dense(&mut x, &g);
        let mut p = unflatten(topology, &x)?;
        for l in &mut p.link_lengths {
            *l = l.max(1e-6);
        }
        x = flatten(&p);
    }
    let f = objective(topology, &x, cloud)?;
    if f < best.0 {
        best = (f, x);
        *history.last_mut().expect("non-empty") = f;
    }
    Ok(TreeFitResult {
        params: unflatten(topology, &best.1)?,
        objective: best.0,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use crate::graph::{Link, TreeTheta};
    use alloc::vec;

    fn template() -> (GraphTopology, KinematicTreeParams) {
        // bent planar chain, so a rotation about z is observable
        let topo = GraphTopology::kinematic_tree(
            4,
            vec![Link::new(0, 1), Link::new(1, 2), Link::new(2, 3)],
            0,
        )
        .unwrap();
        let mut theta = TreeTheta::rest(4);
        theta.rotations[1] = Quat::from_axis_angle(Vec3::Z, 1.0);
        theta.rotations[2] = Quat::from_axis_angle(Vec3::Z, -0.6);
        (
            topo,
            KinematicTreeParams {
                theta,
                link_lengths: vec![1.0, 0.7, 0.5],
            },
        )
    }

    fn sample_links(topo: &GraphTopology, p: &KinematicTreeParams) -> Vec<Vec3> {
        let (j, _) = tree::forward_kinematics(topo, p).unwrap();
        let mut pts = Vec::new();
        for l in topo.links() {
            for k in 0..=10 {
                pts.push(j[l.start].lerp(&j[l.end], k as f64 / 10.0));
            }
        }
        pts
    }

    #[test]
    fn already_optimal_template_stays_put() {
        let (topo, p) = template();
        let cloud = sample_links(&topo, &p);
        let r = fit_kinematic_tree(&topo, &p, &cloud, 50, 0.1).unwrap();
        assert!(r.objective < 1e-12);
        assert!(r.params.theta.root.translation.norm() < 1e-3);
        for (a, b) in r.params.link_lengths.iter().zip(&p.link_lengths) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn recovers_rigid_rotation() {
        let (topo, p) = template();
        let mut rotated = p.clone();
        let rz = Quat::from_axis_angle(Vec3::Z, 30f64.to_radians());
        rotated.theta.root.rotation = rz;
        let cloud = sample_links(&topo, &rotated);
        let r = fit_kinematic_tree(&topo, &p, &cloud, 2000, 0.05).unwrap();
        let got = r.params.theta.root.rotation * r.params.theta.rotations[0];
        let angle = got.angle_to(&rz).to_degrees();
        assert!(angle < 1.0, "root rotation off by {angle} deg, objective {} after {} steps {:?}", r.objective, r.history.len(), r.params);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let (topo, p) = template();
        assert!(fit_kinematic_tree(&topo, &p, &[], 10, 0.1).is_err());
    }
}
