//! JSON documents: graph specs, checkpoints, keyframe tracks, keypoints
//! and dataset manifests. Every document carries `format_version`.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so every document round-trips exactly.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use mbgs_core::camera::Camera;
use mbgs_core::geometry::{Pose, Quat, Vec3};
use mbgs_core::graph::{GraphKind, GraphTopology, Link, MotionGraph, MotionSequence, Theta, TreeTheta, UpTriangle};
use mbgs_core::keyframe::{Keyframe, KeyframeTrack};
use mbgs_core::optimize::{Keypoint, LossConfig};
use mbgs_core::scene::{Scene, SceneCheckpoint};
use mbgs_core::skinning::{PaintMode, Splat, WeightPainting};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKindDto {
    KinematicTree,
    Deformable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDto {
    pub kind: GraphKindDto,
    pub joint_count: usize,
    pub links: Vec<[usize; 2]>,
    #[serde(default)]
    pub root: usize,
    /// `[link, apex joint]` pairs.
    #[serde(default)]
    pub up_triangles: Vec<[usize; 2]>,
    #[serde(default)]
    pub link_lengths: Vec<f64>,
}

impl GraphDto {
    pub fn from_graph(g: &MotionGraph) -> Self {
        let t = &g.topology;
        GraphDto {
            kind: match t.kind() {
                GraphKind::KinematicTree => GraphKindDto::KinematicTree,
                GraphKind::Deformable => GraphKindDto::Deformable,
            },
            joint_count: t.joint_count(),
            links: t.links().iter().map(|l| [l.start, l.end]).collect(),
            root: t.root(),
            up_triangles: t.up_triangles().iter().map(|u| [u.link, u.apex]).collect(),
            link_lengths: g.link_lengths.clone(),
        }
    }

    pub fn to_graph(&self) -> mbgs_core::Result<MotionGraph> {
        let links = self.links.iter().map(|[s, e]| Link::new(*s, *e)).collect();
        let topology = match self.kind {
            GraphKindDto::KinematicTree => GraphTopology::kinematic_tree(self.joint_count, links, self.root)?,
            GraphKindDto::Deformable => GraphTopology::deformable(
                self.joint_count,
                links,
                self.up_triangles.iter().map(|[link, apex]| UpTriangle { link: *link, apex: *apex }).collect(),
            )?,
        };
        MotionGraph::new(topology, self.link_lengths.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDto {
    /// `[w, x, y, z]`
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseDto {
    fn from(p: &Pose) -> Self {
        PoseDto { rotation: p.rotation.as_array(), translation: p.translation.as_array() }
    }
}

impl From<PoseDto> for Pose {
    fn from(p: PoseDto) -> Self {
        Pose::new(Quat::from_array(p.rotation), Vec3::from_array(p.translation))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaDto {
    Tree { root: PoseDto, rotations: Vec<[f64; 4]> },
    Deformable { joints: Vec<[f64; 3]> },
}

impl From<&Theta> for ThetaDto {
    fn from(t: &Theta) -> Self {
        match t {
            Theta::Tree(t) => ThetaDto::Tree {
                root: (&t.root).into(),
                rotations: t.rotations.iter().map(|q| q.as_array()).collect(),
            },
            Theta::Deformable(j) => ThetaDto::Deformable { joints: j.iter().map(|v| v.as_array()).collect() },
        }
    }
}

impl ThetaDto {
    pub fn to_theta(&self, topology: &GraphTopology) -> mbgs_core::Result<Theta> {
        let th = match self {
            ThetaDto::Tree { root, rotations } => Theta::Tree(TreeTheta {
                root: (*root).into(),
                rotations: rotations.iter().map(|q| Quat::from_array(*q)).collect(),
            }),
            ThetaDto::Deformable { joints } => Theta::Deformable(joints.iter().map(|v| Vec3::from_array(*v)).collect()),
        };
        topology.check_theta(&th)?;
        Ok(th)
    }
}

/// A motion graph together with its canonical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub format_version: u32,
    pub graph: GraphDto,
    pub theta: ThetaDto,
}

impl GraphSpec {
    pub fn new(graph: &MotionGraph, theta: &Theta) -> Self {
        GraphSpec { format_version: FORMAT_VERSION, graph: GraphDto::from_graph(graph), theta: theta.into() }
    }

    pub fn decode(&self) -> mbgs_core::Result<(MotionGraph, Theta)> {
        let g = self.graph.to_graph()?;
        let th = self.theta.to_theta(&g.topology)?;
        Ok((g, th))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDto {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World to camera.
    pub pose: PoseDto,
}

impl From<&Camera> for CameraDto {
    fn from(c: &Camera) -> Self {
        CameraDto { fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, width: c.width, height: c.height, pose: (&c.pose).into() }
    }
}

impl CameraDto {
    pub fn to_camera(&self) -> mbgs_core::Result<Camera> {
        let c = Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            pose: self.pose.into(),
            width: self.width,
            height: self.height,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplatDto {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
    pub scale: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub instance_id: u32,
}

impl From<&Splat> for SplatDto {
    fn from(s: &Splat) -> Self {
        SplatDto {
            position: s.pose.translation.as_array(),
            rotation: s.pose.rotation.as_array(),
            scale: s.scale.as_array(),
            opacity: s.opacity,
            color: s.color,
            instance_id: s.instance_id,
        }
    }
}

impl From<&SplatDto> for Splat {
    fn from(s: &SplatDto) -> Self {
        Splat {
            pose: Pose::new(Quat::from_array(s.rotation), Vec3::from_array(s.position)),
            scale: Vec3::from_array(s.scale),
            opacity: s.opacity,
            color: s.color,
            instance_id: s.instance_id,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaintModeDto {
    Softmax,
    Normalized,
}

impl From<PaintMode> for PaintModeDto {
    fn from(m: PaintMode) -> Self {
        match m {
            PaintMode::SoftmaxOfKernel => PaintModeDto::Softmax,
            PaintMode::NormalizedKernel => PaintModeDto::Normalized,
        }
    }
}

impl From<PaintModeDto> for PaintMode {
    fn from(m: PaintModeDto) -> Self {
        match m {
            PaintModeDto::Softmax => PaintMode::SoftmaxOfKernel,
            PaintModeDto::Normalized => PaintMode::NormalizedKernel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaintingDto {
    pub mode: PaintModeDto,
    pub top_k: Option<usize>,
    pub gammas: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossDto {
    pub lambda_data: f64,
    pub lambda_canonical: f64,
    pub lambda_keypoint: f64,
    pub lambda_mask: f64,
    pub learn_gamma: bool,
    pub learn_phi: bool,
    pub learn_canonical: bool,
}

impl From<&LossConfig> for LossDto {
    fn from(l: &LossConfig) -> Self {
        LossDto {
            lambda_data: l.lambda_data,
            lambda_canonical: l.lambda_canonical,
            lambda_keypoint: l.lambda_keypoint,
            lambda_mask: l.lambda_mask,
            learn_gamma: l.learn_gamma,
            learn_phi: l.learn_phi,
            learn_canonical: l.learn_canonical,
        }
    }
}

impl From<LossDto> for LossConfig {
    fn from(l: LossDto) -> Self {
        LossConfig {
            lambda_data: l.lambda_data,
            lambda_canonical: l.lambda_canonical,
            lambda_keypoint: l.lambda_keypoint,
            lambda_mask: l.lambda_mask,
            learn_gamma: l.learn_gamma,
            learn_phi: l.learn_phi,
            learn_canonical: l.learn_canonical,
        }
    }
}

/// A fitted (or freshly bound) scene. Painted weights are not stored; they
/// are recomputed from the canonical parameters, radii, mode and top-k,
/// which is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub graph: GraphDto,
    pub canonical_index: usize,
    pub frames: Vec<ThetaDto>,
    pub painting: PaintingDto,
    pub instance_count: usize,
    pub splats: Vec<SplatDto>,
    pub loss: LossDto,
    pub history: Vec<f64>,
    pub camera: Option<CameraDto>,
    pub initial_joints: Vec<[f64; 3]>,
}

impl CheckpointFile {
    pub fn new(c: &SceneCheckpoint) -> Self {
        let s = &c.scene;
        CheckpointFile {
            format_version: FORMAT_VERSION,
            graph: GraphDto::from_graph(&s.graph),
            canonical_index: s.motion.canonical_index,
            frames: s.motion.frames.iter().map(ThetaDto::from).collect(),
            painting: PaintingDto { mode: s.painting.mode.into(), top_k: s.painting.top_k, gammas: s.painting.gammas.clone() },
            instance_count: s.instance_count,
            splats: s.splats.iter().map(SplatDto::from).collect(),
            loss: (&c.loss).into(),
            history: c.history.clone(),
            camera: c.camera.as_ref().map(CameraDto::from),
            initial_joints: c.initial_joints.iter().map(|v| v.as_array()).collect(),
        }
    }

    pub fn decode(&self) -> mbgs_core::Result<SceneCheckpoint> {
        let graph = self.graph.to_graph()?;
        let frames = self
            .frames
            .iter()
            .map(|t| t.to_theta(&graph.topology))
            .collect::<mbgs_core::Result<Vec<_>>>()?;
        if self.canonical_index >= frames.len() {
            return Err(mbgs_core::Error::InvalidInput("canonical index outside the frame range".into()));
        }
        let motion = MotionSequence { frames, canonical_index: self.canonical_index };
        let splats: Vec<Splat> = self.splats.iter().map(Splat::from).collect();
        for s in &splats {
            s.validate()?;
        }
        let positions: Vec<Vec3> = splats.iter().map(Splat::position).collect();
        let painting = WeightPainting::paint(
            &graph,
            motion.canonical(),
            &positions,
            self.painting.gammas.clone(),
            self.painting.mode.into(),
            self.painting.top_k,
        )?;
        let scene = Scene { splats, graph, motion, painting, instance_count: self.instance_count };
        scene.validate()?;
        let loss: LossConfig = self.loss.into();
        loss.validate()?;
        Ok(SceneCheckpoint {
            scene,
            loss,
            history: self.history.clone(),
            camera: self.camera.map(|c| c.to_camera()).transpose()?,
            initial_joints: self.initial_joints.iter().map(|v| Vec3::from_array(*v)).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeDto {
    pub time: f64,
    pub theta: ThetaDto,
    #[serde(default)]
    pub link_lengths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeFile {
    pub format_version: u32,
    pub keyframes: Vec<KeyframeDto>,
}

impl KeyframeFile {
    pub fn new(track: &KeyframeTrack) -> Self {
        KeyframeFile {
            format_version: FORMAT_VERSION,
            keyframes: track
                .keys()
                .iter()
                .map(|k| KeyframeDto { time: k.time, theta: (&k.theta).into(), link_lengths: k.link_lengths.clone() })
                .collect(),
        }
    }

    pub fn decode(&self, topology: &GraphTopology) -> mbgs_core::Result<KeyframeTrack> {
        let mut keys = Vec::with_capacity(self.keyframes.len());
        for k in &self.keyframes {
            keys.push(Keyframe { time: k.time, theta: k.theta.to_theta(topology)?, link_lengths: k.link_lengths.clone() });
        }
        KeyframeTrack::from_keys(topology, keys)
    }
}

/// Per frame, per joint `[x, y, confidence]` in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointFile {
    pub format_version: u32,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl KeypointFile {
    pub fn new(frames: &[Vec<Keypoint>]) -> Self {
        KeypointFile {
            format_version: FORMAT_VERSION,
            frames: frames.iter().map(|f| f.iter().map(|k| [k.x, k.y, k.confidence]).collect()).collect(),
        }
    }

    pub fn keypoints(&self) -> Vec<Vec<Keypoint>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|[x, y, confidence]| Keypoint { x: *x, y: *y, confidence: *confidence }).collect())
            .collect()
    }
}

/// Per-frame files named by a pattern containing `{frame}` (or a padded
/// `{frame:04}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePattern {
    pub pattern: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskPattern {
    /// Pattern with `{frame}` and `{instance}` placeholders; 8-bit
    /// grayscale PNG, nonzero marks the instance.
    pub pattern: String,
    pub instances: usize,
}

/// A dataset description. Relative paths resolve against the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub frames: FramePattern,
    pub canonical_index: usize,
    /// Point `i` of every frame is the same physical point.
    pub correspondence: bool,
    #[serde(default)]
    pub camera: Option<CameraDto>,
    /// Path of a keypoint document.
    #[serde(default)]
    pub keypoints: Option<String>,
    #[serde(default)]
    pub masks: Option<MaskPattern>,
    /// Pattern of 16-bit grayscale depth PNGs in millimetres (0 = hole).
    #[serde(default)]
    pub depth: Option<String>,
    /// Kinematic template used by `init-graph` for tree graphs.
    #[serde(default)]
    pub skeleton: Option<GraphSpec>,
}

/// Expand `{name}` and `{name:0N}` placeholders.
pub fn expand_pattern(pattern: &str, vars: &[(&str, usize)]) -> String {
    let mut out = pattern.to_string();
    for (name, v) in vars {
        let plain = format!("{{{name}}}");
        out = out.replace(&plain, &v.to_string());
        let prefix = format!("{{{name}:0");
        while let Some(start) = out.find(&prefix) {
            let rest = &out[start + prefix.len()..];
            let Some(end) = rest.find('}') else { break };
            let width: usize = rest[..end].parse().unwrap_or(0);
            let token_len = prefix.len() + end + 1;
            out.replace_range(start..start + token_len, &format!("{v:0width$}"));
        }
    }
    out
}

fn check_version(path: &Path, v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported format_version {v} (expected {FORMAT_VERSION})")));
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("documents serialize");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    crate::fsio::write_bytes(path, &to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

pub fn load_graph_spec(path: &Path) -> Result<(MotionGraph, Theta)> {
    let spec: GraphSpec = read_json(path)?;
    check_version(path, spec.format_version)?;
    spec.decode().map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<SceneCheckpoint> {
    let c: CheckpointFile = read_json(path)?;
    check_version(path, c.format_version)?;
    c.decode().map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_checkpoint(path: &Path, c: &SceneCheckpoint) -> Result<()> {
    write_json(path, &CheckpointFile::new(c))
}

pub fn load_keyframes(path: &Path, topology: &GraphTopology) -> Result<KeyframeTrack> {
    let k: KeyframeFile = read_json(path)?;
    check_version(path, k.format_version)?;
    k.decode(topology).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_keypoints(path: &Path) -> Result<Vec<Vec<Keypoint>>> {
    let k: KeypointFile = read_json(path)?;
    check_version(path, k.format_version)?;
    Ok(k.keypoints())
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(path)?;
    check_version(path, m.format_version)?;
    if m.frames.count == 0 || m.canonical_index >= m.frames.count {
        return Err(Error::format(path, "canonical_index outside the frame range"));
    }
    Ok(m)
}
