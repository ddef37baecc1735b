//! Damped least-squares inverse kinematics on kinematic trees.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{tree, GraphTopology, KinematicTreeParams, TreeTheta};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IkTarget {
    Position(Vec3),
    /// Position plus orientation of the joint's accumulated frame.
    Pose(Pose),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkOptions {
    pub iters: usize,
    pub damping: f64,
    /// A target counts as reached when its residual is at most this.
    pub tolerance: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            iters: 500,
            damping: 1e-2,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IkResult {
    pub params: KinematicTreeParams,
    /// Per target: position distance, plus orientation angle in radians for
    /// pose targets.
    pub residuals: Vec<f64>,
    pub residual: f64,
    pub reached: bool,
    pub iterations: usize,
}

struct Problem<'a> {
    topology: &'a GraphTopology,
    base: &'a KinematicTreeParams,
    targets: &'a [(usize, IkTarget)],
    free_root: bool,
}

impl Problem<'_> {
    fn dof(&self) -> usize {
        3 * self.topology.joint_count() + if self.free_root { 6 } else { 0 }
    }

    fn apply<T: Real>(&self, theta: &TreeTheta, delta: &[T]) -> TreeTheta<T> {
        let j = self.topology.joint_count();
        let rotations = (0..j)
            .map(|i| {
                let d = Vec3::new(delta[3 * i], delta[3 * i + 1], delta[3 * i + 2]);
                Quat::from_f64(theta.rotations[i]) * Quat::from_small_rotation(d)
            })
            .collect();
        let mut root = Pose::from_f64(theta.root);
        if self.free_root {
            let o = 3 * j;
            let dr = Vec3::new(delta[o], delta[o + 1], delta[o + 2]);
            let dt = Vec3::new(delta[o + 3], delta[o + 4], delta[o + 5]);
            root = Pose::new(root.rotation * Quat::from_small_rotation(dr), root.translation + dt);
        }
        TreeTheta { rotations, root }
    }

    /// Stacked error vector (target minus current) and per-target residuals.
    fn errors<T: Real>(&self, theta: &TreeTheta<T>) -> Result<(Vec<T>, Vec<f64>)> {
        let lengths: Vec<T> = self.base.link_lengths.iter().map(|&l| T::from_f64(l)).collect();
        let frames = tree::forward_kinematics_raw(self.topology, theta, &lengths)?;
        let mut e = Vec::new();
        let mut res = Vec::new();
        for (joint, target) in self.targets {
            let f = frames.joint_frames[*joint];
            let (pos, rot) = match target {
                IkTarget::Position(p) => (*p, None),
                IkTarget::Pose(p) => (p.translation, Some(p.rotation)),
            };
            let d = Vec3::from_f64(pos) - f.translation;
            e.extend_from_slice(&d.as_array());
            let mut r = d.norm().value() * d.norm().value();
            if let Some(q) = rot {
                let mut diff = Quat::from_f64(q) * f.rotation.conj();
                if diff.w.value() < 0.0 {
                    diff = -diff;
                }
                let v = diff.vector().scale(T::from_f64(2.0));
                e.extend_from_slice(&v.as_array());
                let ang = diff.value().angle();
                r += ang * ang;
            }
            res.push(crate::scalar::fm::sqrt(r));
        }
        Ok((e, res))
    }
}

fn commit(p: &Problem<'_>, theta: &TreeTheta, delta: &[f64]) -> TreeTheta {
    let mut t = p.apply::<f64>(theta, delta);
    for q in &mut t.rotations {
        *q = q.normalized();
    }
    t.root.rotation = t.root.rotation.normalized();
    t
}

/// Damped least squares over small rotation increments at every joint (and
/// the root pose when the root itself is targeted). Steps that increase the
/// error are retried with heavier damping. Unreachable targets end at the
/// closest configuration found, flagged through `reached`.
pub fn inverse_kinematics(
    topology: &GraphTopology,
    params: &KinematicTreeParams,
    targets: &[(usize, IkTarget)],
    options: &IkOptions,
) -> Result<IkResult> {
    if !topology.is_tree() {
        return Err(Error::Topology("inverse kinematics needs a kinematic tree".into()));
    }
    topology.check_phi(&params.link_lengths)?;
    if targets.is_empty() {
        return Err(Error::invalid("no IK targets"));
    }
    for (j, _) in targets {
        if *j >= topology.joint_count() {
            return Err(Error::invalid(alloc::format!("target joint {j} does not exist")));
        }
    }
    let problem = Problem {
        topology,
        base: params,
        targets,
        free_root: targets.iter().any(|(j, _)| *j == topology.root()),
    };
    let n = problem.dof();
    let mut theta = params.theta.clone();
    let zero = vec![0.0; n];
    let (mut e, mut res) = problem.errors(&problem.apply::<f64>(&theta, &zero))?;
    let mut err2: f64 = e.iter().map(|v| v * v).sum();
    let mut lambda = options.damping;
    let mut iterations = 0;
    let mut tape = Tape::new();
    let stop = options.tolerance * 1e-3;
    while iterations < options.iters && res.iter().cloned().fold(0.0, f64::max) > stop {
        iterations += 1;
        tape.clear();
        let d: Vec<Var<'_>> = tape.vars(&zero);
        let (ev, _) = problem.errors(&problem.apply(&theta, &d))?;
        let m = ev.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for (r, out) in ev.iter().enumerate() {
            let g = tape.gradient(*out, &d);
            for (c, v) in g.iter().enumerate() {
                jac[(r, c)] = *v;
            }
        }
        let ev = DVector::from_vec(e.clone());
        let jjt = &jac * jac.transpose();
        let mut improved = false;
        while lambda < 1e8 {
            let a = &jjt + DMatrix::<f64>::identity(m, m) * (lambda * lambda);
            let y = match a.cholesky() {
                Some(c) => c.solve(&ev),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let step: Vec<f64> = (-(jac.transpose() * y)).iter().cloned().collect();
            let cand = commit(&problem, &theta, &step);
            let (ce, cres) = problem.errors(&problem.apply::<f64>(&cand, &zero))?;
            let c2: f64 = ce.iter().map(|v| v * v).sum();
            if c2 < err2 {
                theta = cand;
                e = ce;
                res = cres;
                err2 = c2;
                lambda = (lambda * 0.3).max(options.damping * 1e-3);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual = res.iter().cloned().fold(0.0, f64::max);
    Ok(IkResult {
        params: KinematicTreeParams {
            theta,
            link_lengths: params.link_lengths.clone(),
        },
        reached: residual <= options.tolerance,
        residuals: res,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Link;

    fn two_link() -> (GraphTopology, KinematicTreeParams) {
        let topo = GraphTopology::kinematic_tree(3, vec![Link::new(0, 1), Link::new(1, 2)], 0).unwrap();
        (
            topo,
            KinematicTreeParams {
                theta: TreeTheta::rest(3),
                link_lengths: vec![1.0, 1.0],
            },
        )
    }

    #[test]
    fn satisfied_target_is_left_alone() {
        let (topo, p) = two_link();
        let r = inverse_kinematics(&topo, &p, &[(2, IkTarget::Position(Vec3::new(2.0, 0.0, 0.0)))], &IkOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.residual, 0.0);
        assert!(r.reached);
        assert_eq!(r.params, p);
    }

    #[test]
    fn reaches_elbow_target() {
        let (topo, p) = two_link();
        let target = Vec3::new(1.0, 1.0, 0.0);
        let r = inverse_kinematics(&topo, &p, &[(2, IkTarget::Position(target))], &IkOptions::default()).unwrap();
        let (j, _) = tree::forward_kinematics(&topo, &r.params).unwrap();
        assert!((j[2] - target).norm() < 1e-6, "residual {}", r.residual);
        assert!(r.reached);
    }

    #[test]
    fn unreachable_target_reports_gap() {
        let (topo, p) = two_link();
        let r = inverse_kinematics(&topo, &p, &[(2, IkTarget::Position(Vec3::new(5.0, 0.0, 0.0)))], &IkOptions::default()).unwrap();
        assert!((r.residual - 3.0).abs() < 1e-6);
        assert!(!r.reached);
    }

    #[test]
    fn pose_target_orientation() {
        let (topo, p) = two_link();
        let q = Quat::from_axis_angle(Vec3::new(0.2, 0.3, 1.0), 0.8);
        let mut theta = p.theta.clone();
        theta.rotations[1] = q;
        let goal = KinematicTreeParams { theta, link_lengths: p.link_lengths.clone() };
        let f = tree::forward_kinematics_raw(&topo, &goal.theta, &goal.link_lengths).unwrap();
        let target = IkTarget::Pose(f.joint_frames[2]);
        let r = inverse_kinematics(&topo, &p, &[(2, target)], &IkOptions::default()).unwrap();
        assert!(r.residual < 1e-6, "residual {}", r.residual);
    }
}
