use std::sync::{Arc, RwLock};

use mbgs_core::geometry::{Pose, Quat, Vec3};
use mbgs_core::graph::{inverse_kinematics, IkOptions, IkTarget, KinematicTreeParams, Theta};
use mbgs_core::keyframe::{interpolate_keyframes, Keyframe, KeyframeTrack};
use mbgs_core::scene::SceneCheckpoint;

use super::protocol::{Edit, ErrorBody, ErrorCode, IkReport, Preview, PREVIEW_BUDGET};

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub code: ErrorCode,
    pub message: String,
}

impl Rejection {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Rejection { code, message: message.into() }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code, message: self.message.clone() }
    }
}

fn invalid(m: impl Into<String>) -> Rejection {
    Rejection::new(ErrorCode::Invalid, m)
}

fn mismatch(m: impl Into<String>) -> Rejection {
    Rejection::new(ErrorCode::KindMismatch, m)
}

pub(crate) fn core_rejection(e: mbgs_core::Error) -> Rejection {
    let err = crate::Error::Core(e);
    let code = if err.is_numerical() { ErrorCode::Numerical } else { ErrorCode::Invalid };
    Rejection::new(code, err.to_string())
}

/// Committed state of a session. Readers clone it under a read lock, so a
/// preview always corresponds to exactly one revision.
#[derive(Clone, Debug)]
pub struct Committed {
    pub revision: u64,
    pub theta: Theta,
    pub track: KeyframeTrack,
}

pub struct Session {
    pub id: String,
    pub scene_id: String,
    pub checkpoint: Arc<SceneCheckpoint>,
    state: RwLock<Committed>,
}

pub struct EditOutcome {
    pub committed: Committed,
    pub ik: Option<IkReport>,
}

fn unit_quat(q: [f64; 4], what: &str) -> Result<Quat, Rejection> {
    let q = Quat::from_array(q);
    if !q.as_array().iter().all(|v| v.is_finite()) || (q.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(invalid(format!("{what} must be a unit quaternion")));
    }
    Ok(q)
}

fn finite_vec(v: [f64; 3], what: &str) -> Result<Vec3, Rejection> {
    let v = Vec3::from_array(v);
    if !v.is_finite() {
        return Err(invalid(format!("{what} must be finite")));
    }
    Ok(v)
}

impl Session {
    pub fn new(id: String, scene_id: String, checkpoint: Arc<SceneCheckpoint>) -> Self {
        let theta = checkpoint.scene.canonical().clone();
        let state = Committed { revision: 0, theta, track: KeyframeTrack::new() };
        Session { id, scene_id, checkpoint, state: RwLock::new(state) }
    }

    pub fn snapshot(&self) -> Committed {
        self.state.read().expect("session lock").clone()
    }

    fn check_revision(current: u64, requested: u64) -> Result<(), Rejection> {
        if current != requested {
            return Err(Rejection::new(
                ErrorCode::Conflict,
                format!("request is based on revision {requested}, session is at {current}"),
            ));
        }
        Ok(())
    }

    /// Check a read against the committed revision without taking the write
    /// lock.
    pub fn check_read(&self, revision: Option<u64>) -> Result<Committed, Rejection> {
        let c = self.snapshot();
        if let Some(r) = revision {
            Self::check_revision(c.revision, r)?;
        }
        Ok(c)
    }

    pub fn apply_edit(&self, revision: u64, edit: &Edit) -> Result<EditOutcome, Rejection> {
        let mut state = self.state.write().expect("session lock");
        Self::check_revision(state.revision, revision)?;
        let (theta, ik) = self.edited_theta(&state.theta, edit)?;
        state.theta = theta;
        state.revision += 1;
        Ok(EditOutcome { committed: state.clone(), ik })
    }

    pub fn capture_keyframe(&self, revision: u64, time: f64) -> Result<Committed, Rejection> {
        let mut state = self.state.write().expect("session lock");
        Self::check_revision(state.revision, revision)?;
        let key = Keyframe {
            time,
            theta: state.theta.clone(),
            link_lengths: self.checkpoint.scene.graph.link_lengths.clone(),
        };
        let topo = &self.checkpoint.scene.graph.topology;
        state.track.push(topo, key).map_err(core_rejection)?;
        state.revision += 1;
        Ok(state.clone())
    }

    fn edited_theta(&self, theta: &Theta, edit: &Edit) -> Result<(Theta, Option<IkReport>), Rejection> {
        let joints = self.checkpoint.scene.graph.topology.joint_count();
        let check_joint = |j: usize| {
            if j >= joints {
                Err(invalid(format!("joint {j} outside 0..{joints}")))
            } else {
                Ok(())
            }
        };
        let mut out = theta.clone();
        let mut ik = None;
        match (edit, &mut out) {
            (Edit::SetJointRotation { joint, rotation }, Theta::Tree(t)) => {
                check_joint(*joint)?;
                t.rotations[*joint] = unit_quat(*rotation, "rotation")?;
            }
            (Edit::SetRootPose { pose }, Theta::Tree(t)) => {
                let p: Pose = (*pose).into();
                unit_quat(pose.rotation, "root rotation")?;
                finite_vec(pose.translation, "root translation")?;
                t.root = p;
            }
            (Edit::SetJointPosition { joint, position }, Theta::Deformable(j)) => {
                check_joint(*joint)?;
                j[*joint] = finite_vec(*position, "position")?;
            }
            (Edit::DragJointGroup { joints: group, delta }, th) => {
                if group.is_empty() {
                    return Err(invalid("drag needs at least one joint"));
                }
                let mut seen = vec![false; joints];
                for &j in group {
                    check_joint(j)?;
                    if std::mem::replace(&mut seen[j], true) {
                        return Err(invalid(format!("joint {j} listed twice")));
                    }
                }
                let d = finite_vec(*delta, "delta")?;
                match th {
                    Theta::Deformable(j) => {
                        for &i in group {
                            j[i] = j[i] + d;
                        }
                    }
                    Theta::Tree(_) => {
                        let current = self.checkpoint.scene.graph.joint_positions(theta).map_err(core_rejection)?;
                        let targets: Vec<(usize, IkTarget)> =
                            group.iter().map(|&j| (j, IkTarget::Position(current[j] + d))).collect();
                        let (t, report) = self.solve(theta, &targets)?;
                        *th = t;
                        ik = Some(report);
                    }
                }
            }
            (Edit::SolveIk { targets }, Theta::Tree(_)) => {
                if targets.is_empty() {
                    return Err(invalid("IK needs at least one target"));
                }
                let mut list = Vec::with_capacity(targets.len());
                for t in targets {
                    check_joint(t.joint)?;
                    let p = finite_vec(t.position, "target position")?;
                    list.push((
                        t.joint,
                        match t.rotation {
                            Some(q) => IkTarget::Pose(Pose::new(unit_quat(q, "target rotation")?, p)),
                            None => IkTarget::Position(p),
                        },
                    ));
                }
                let (t, report) = self.solve(theta, &list)?;
                out = t;
                ik = Some(report);
            }
            (Edit::SetJointRotation { .. } | Edit::SetRootPose { .. } | Edit::SolveIk { .. }, Theta::Deformable(_)) => {
                return Err(mismatch("rotations, root poses and IK apply to kinematic trees only"));
            }
            (Edit::SetJointPosition { .. }, Theta::Tree(_)) => {
                return Err(mismatch("joint positions of a kinematic tree follow from its rotations"));
            }
        }
        self.checkpoint.scene.graph.topology.check_theta(&out).map_err(core_rejection)?;
        Ok((out, ik))
    }

    fn solve(&self, theta: &Theta, targets: &[(usize, IkTarget)]) -> Result<(Theta, IkReport), Rejection> {
        let graph = &self.checkpoint.scene.graph;
        let tree = theta.as_tree().expect("tree edits only").clone();
        let params = KinematicTreeParams { theta: tree, link_lengths: graph.link_lengths.clone() };
        let r = inverse_kinematics(&graph.topology, &params, targets, &IkOptions::default()).map_err(core_rejection)?;
        Ok((Theta::Tree(r.params.theta), IkReport { reached: r.reached, residuals: r.residuals }))
    }

    /// Deformed positions of the working parameters, or of the keyframe
    /// track at `time`.
    pub fn preview(&self, c: &Committed, time: Option<f64>, max_points: Option<usize>) -> Result<Preview, Rejection> {
        let scene = &self.checkpoint.scene;
        let positions = match time {
            None => scene.positions_at(&c.theta).map_err(core_rejection)?,
            Some(t) => {
                let key = interpolate_keyframes(&c.track, t).map_err(core_rejection)?;
                crate::animate::deform_keyframe(scene, &key)
                    .map_err(|e| invalid(e.to_string()))?
                    .iter()
                    .map(|s| s.position())
                    .collect()
            }
        };
        Ok(decimate(&positions, &scene.splats.iter().map(|s| s.instance_id).collect::<Vec<_>>(), max_points))
    }
}

pub fn preview_stride(total: usize, max_points: Option<usize>) -> usize {
    let budget = max_points.unwrap_or(PREVIEW_BUDGET).clamp(1, PREVIEW_BUDGET);
    total.div_ceil(budget).max(1)
}

pub fn decimate(positions: &[Vec3], instance_ids: &[u32], max_points: Option<usize>) -> Preview {
    let stride = preview_stride(positions.len(), max_points);
    Preview {
        total: positions.len(),
        stride,
        positions: positions.iter().step_by(stride).map(|p| p.as_array()).collect(),
        instance_ids: instance_ids.iter().step_by(stride).copied().collect(),
    }
}
