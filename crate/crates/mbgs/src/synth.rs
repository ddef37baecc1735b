//! Synthetic datasets with known ground truth: an articulated chain, a
//! bending sheet and a small scene exercising every loss term.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mbgs_core::camera::Camera;
use mbgs_core::geometry::{Pose, Quat, Vec3};
use mbgs_core::graph::{init_deformable, GraphTopology, Link, MotionGraph, Theta, TreeTheta, DepthImage};
use mbgs_core::optimize::Keypoint;
use mbgs_core::render::{render_instance_masks, visible_splats};
use mbgs_core::scene::{PaintOptions, Scene};
use mbgs_core::skinning::Splat;

use crate::error::Result;
use crate::formats::{
    self, expand_pattern, CameraDto, FramePattern, GraphSpec, KeypointFile, Manifest, MaskPattern, ThetaDto,
    FORMAT_VERSION,
};
use crate::frames::{save_frames, splats_from_cloud, FrameSet};
use crate::ply::{PlyFormat, PointCloud};

pub const FRAME_PATTERN: &str = "frames/frame_{frame:04}.ply";
pub const MASK_PATTERN: &str = "masks/mask_{frame:04}_{instance}.png";
pub const DEPTH_PATTERN: &str = "depth/depth_{frame:04}.png";
pub const RADIUS_PX: f64 = 2.0;

/// Ground-truth parameters of every frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub format_version: u32,
    pub graph: GraphSpec,
    pub frames: Vec<ThetaDto>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    /// Graph spec to fit with.
    pub graph: PathBuf,
    /// Present when per-frame ground-truth parameters exist.
    pub truth: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Chain,
    Sheet,
    Gradcheck,
}

pub fn generate(kind: SynthKind, dir: &Path, seed: u64) -> Result<SynthOutput> {
    match kind {
        SynthKind::Chain => chain(dir, seed),
        SynthKind::Sheet => sheet(dir, seed),
        SynthKind::Gradcheck => gradcheck(dir, seed),
    }
}

fn gray(v: f64) -> [u8; 3] {
    let b = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [b, 255 - b, 128]
}

fn moved_cloud(base: &PointCloud, positions: Vec<Vec3>) -> PointCloud {
    PointCloud { positions, colors: base.colors.clone(), instance_ids: base.instance_ids.clone() }
}

fn write_keypoints(dir: &Path, frames: &[Vec<Keypoint>]) -> Result<String> {
    let rel = "keypoints.json".to_string();
    formats::write_json(&dir.join(&rel), &KeypointFile::new(frames))?;
    Ok(rel)
}

fn project_joints(camera: &Camera, joints: &[Vec3]) -> Vec<Keypoint> {
    joints
        .iter()
        .map(|j| match camera.project(*j) {
            Some((x, y, _)) => Keypoint { x, y, confidence: 1.0 },
            None => Keypoint { x: 0.0, y: 0.0, confidence: 0.0 },
        })
        .collect()
}

/// Camera-space depth of the front-most splat per pixel; uncovered pixels
/// are holes.
fn render_depth(splats: &[Splat], camera: &Camera) -> DepthImage {
    let owner = visible_splats(splats, camera, RADIUS_PX);
    let depth = owner
        .iter()
        .map(|o| o.map(|i| camera.to_camera(splats[i].position()).z).unwrap_or(0.0))
        .collect();
    DepthImage::new(camera.width, camera.height, depth).expect("pixel count matches")
}

fn manifest(count: usize, camera: Option<&Camera>) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        frames: FramePattern { pattern: FRAME_PATTERN.into(), count },
        canonical_index: 0,
        correspondence: true,
        camera: camera.map(CameraDto::from),
        keypoints: None,
        masks: None,
        depth: None,
        skeleton: None,
    }
}

pub const CHAIN_LENGTHS: [f64; 3] = [1.0, 0.8, 0.6];
pub const CHAIN_FRAMES: usize = 10;
pub const CHAIN_POINTS: usize = 2000;
/// Semi-axes of the elliptical cross-section around each link.
pub const CHAIN_SECTION: (f64, f64) = (0.3, 0.15);

/// Per-frame truth of the chain: root drift plus bends at the three
/// non-leaf joints, zero at frame 0.
pub fn chain_theta(t: usize) -> Theta {
    let s = (PI * t as f64 / (CHAIN_FRAMES - 1) as f64).sin();
    let c = t as f64 / (CHAIN_FRAMES - 1) as f64;
    let mut th = TreeTheta::rest(4);
    th.root = Pose::from_translation(Vec3::new(0.1 * c, 0.05 * s, 0.0));
    th.rotations[0] = Quat::from_axis_angle(Vec3::new(0.2, 0.3, 1.0), 0.5 * s);
    th.rotations[1] = Quat::from_axis_angle(Vec3::Z, -0.7 * c);
    th.rotations[2] = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.4), 0.6 * s);
    Theta::Tree(th)
}

pub fn chain_graph() -> MotionGraph {
    let topo = GraphTopology::kinematic_tree(4, vec![Link::new(0, 1), Link::new(1, 2), Link::new(2, 3)], 0)
        .expect("valid chain");
    MotionGraph::new(topo, CHAIN_LENGTHS.to_vec()).expect("valid lengths")
}

/// Three-link chain with points scattered in flat elliptical bands around the
/// links, moved by the chain's own skinning, with canonical keypoints and
/// depth for skeleton lifting.
pub fn chain(dir: &Path, seed: u64) -> Result<SynthOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = chain_graph();
    let canonical = chain_theta(0);
    let total: f64 = CHAIN_LENGTHS.iter().sum();
    let mut positions = Vec::with_capacity(CHAIN_POINTS);
    let mut colors = Vec::with_capacity(CHAIN_POINTS);
    for _ in 0..CHAIN_POINTS {
        let x = rng.random::<f64>() * total;
        let (r, a) = (rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
        positions.push(Vec3::new(x, CHAIN_SECTION.0 * r * a.cos(), CHAIN_SECTION.1 * r * a.sin()));
        colors.push(gray(x / total));
    }
    let base = PointCloud { positions, colors, instance_ids: None };
    let scene = Scene::bind(splats_from_cloud(&base), graph.clone(), canonical.clone(), CHAIN_FRAMES, 0, PaintOptions::default())?;
    let thetas: Vec<Theta> = (0..CHAIN_FRAMES).map(chain_theta).collect();
    let mut frames = Vec::with_capacity(CHAIN_FRAMES);
    for th in &thetas {
        frames.push(moved_cloud(&base, scene.positions_at(th)?));
    }
    save_frames(&FrameSet { frames, correspondence: true, canonical_index: 0 }, dir, FRAME_PATTERN, PlyFormat::BinaryLittleEndian)?;

    let camera = Camera::looking_at(Vec3::new(1.2, -0.3, 4.0), Vec3::new(1.2, 0.0, 0.0), Vec3::Y, 260.0, 320, 240)?;
    let keypoints: Vec<Vec<Keypoint>> =
        thetas.iter().map(|th| Ok(project_joints(&camera, &graph.joint_positions(th)?))).collect::<Result<_>>()?;
    for (t, th) in thetas.iter().enumerate() {
        let moved = scene.deform_to(th)?;
        crate::image::write_depth(&dir.join(expand_pattern(DEPTH_PATTERN, &[("frame", t)])), &render_depth(&moved, &camera))?;
    }

    let template = {
        let g = MotionGraph::new(graph.topology.clone(), vec![1.0; 3])?;
        GraphSpec::new(&g, &Theta::Tree(TreeTheta::rest(4)))
    };
    let mut m = manifest(CHAIN_FRAMES, Some(&camera));
    m.keypoints = Some(write_keypoints(dir, &keypoints)?);
    m.depth = Some(DEPTH_PATTERN.into());
    m.skeleton = Some(template);
    let manifest_path = dir.join("manifest.json");
    formats::write_json(&manifest_path, &m)?;

    let graph_path = dir.join("graph.json");
    let spec = GraphSpec::new(&graph, &canonical);
    formats::write_json(&graph_path, &spec)?;
    let truth_path = dir.join("truth.json");
    formats::write_json(
        &truth_path,
        &TruthFile { format_version: FORMAT_VERSION, graph: spec, frames: thetas.iter().map(ThetaDto::from).collect() },
    )?;
    Ok(SynthOutput { manifest: manifest_path, graph: graph_path, truth: Some(truth_path) })
}

pub const SHEET_FRAMES: usize = 10;
pub const SHEET_POINTS: (usize, usize) = (100, 50);
pub const SHEET_JOINTS: usize = 32;
pub const SHEET_KNN: usize = 4;

/// Sheet point `(x, y)` rolled onto a cylinder of curvature `k` about the
/// y axis, then twisted about x.
pub fn sheet_deform(p: Vec3, t: usize) -> Vec3 {
    let s = t as f64 / (SHEET_FRAMES - 1) as f64;
    let k = 0.9 * s;
    let (x, z) = if k.abs() < 1e-12 { (p.x, p.z) } else { ((k * p.x).sin() / k, (1.0 - (k * p.x).cos()) / k) };
    let twist = 0.25 * s * p.x;
    let (c, sn) = (twist.cos(), twist.sin());
    Vec3::new(x, c * p.y - sn * z, sn * p.y + c * z)
}

/// A 2 x 1 jittered grid bending and twisting over ten frames, with a
/// farthest-point deformable graph.
pub fn sheet(dir: &Path, seed: u64) -> Result<SynthOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny) = SHEET_POINTS;
    let mut positions = Vec::with_capacity(nx * ny);
    let mut colors = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let x = -1.0 + 2.0 * (i as f64 + rng.random_range(0.25..0.75)) / nx as f64;
            let y = -0.5 + (j as f64 + rng.random_range(0.25..0.75)) / ny as f64;
            positions.push(Vec3::new(x, y, 0.0));
            colors.push(gray(0.5 * (x + 1.0)));
        }
    }
    let base = PointCloud { positions, colors, instance_ids: None };
    let frames = (0..SHEET_FRAMES)
        .map(|t| moved_cloud(&base, base.positions.iter().map(|p| sheet_deform(*p, t)).collect()))
        .collect();
    save_frames(&FrameSet { frames, correspondence: true, canonical_index: 0 }, dir, FRAME_PATTERN, PlyFormat::BinaryLittleEndian)?;
    let manifest_path = dir.join("manifest.json");
    formats::write_json(&manifest_path, &manifest(SHEET_FRAMES, None))?;
    let (topology, params) = init_deformable(&base.positions, SHEET_JOINTS, SHEET_KNN)?;
    let graph_path = dir.join("graph.json");
    formats::write_json(
        &graph_path,
        &GraphSpec::new(&MotionGraph::new(topology, vec![])?, &Theta::Deformable(params.joint_positions)),
    )?;
    Ok(SynthOutput { manifest: manifest_path, graph: graph_path, truth: None })
}

pub const GRADCHECK_JOINTS: usize = 20;
pub const GRADCHECK_POINTS: usize = 500;
pub const GRADCHECK_FRAMES: usize = 3;

fn blob_deform(p: Vec3, t: usize) -> Vec3 {
    let s = t as f64 * 0.15;
    let q = Quat::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), s * p.x);
    q.rotate(p) + Vec3::new(0.1 * s, -0.05 * s, 0.02 * s)
}

/// A two-instance ellipsoidal blob with a 20-joint deformable graph,
/// correspondences, keypoints and instance masks, so that all loss terms
/// contribute.
pub fn gradcheck(dir: &Path, seed: u64) -> Result<SynthOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(GRADCHECK_POINTS);
    while positions.len() < GRADCHECK_POINTS {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm() <= 1.0 {
            positions.push(Vec3::new(1.5 * p.x, 0.8 * p.y, 0.6 * p.z));
        }
    }
    let colors = positions.iter().map(|p| gray(0.5 * (p.y / 0.8 + 1.0))).collect();
    let instance_ids = Some(positions.iter().map(|p| u32::from(p.x > 0.0)).collect());
    let base = PointCloud { positions, colors, instance_ids };
    let frames: Vec<PointCloud> = (0..GRADCHECK_FRAMES)
        .map(|t| moved_cloud(&base, base.positions.iter().map(|p| blob_deform(*p, t)).collect()))
        .collect();

    let (topology, params) = init_deformable(&base.positions, GRADCHECK_JOINTS, 4)?;
    let camera = Camera::looking_at(Vec3::new(0.3, -0.4, 5.0), Vec3::ZERO, Vec3::Y, 90.0, 96, 72)?;
    let keypoints: Vec<Vec<Keypoint>> = (0..GRADCHECK_FRAMES)
        .map(|t| {
            let moved: Vec<Vec3> = params.joint_positions.iter().map(|j| blob_deform(*j, t)).collect();
            let mut k = project_joints(&camera, &moved);
            for kp in &mut k {
                kp.x += rng.random_range(-0.5..0.5);
                kp.y += rng.random_range(-0.5..0.5);
                kp.confidence = rng.random_range(0.5..1.0);
            }
            k
        })
        .collect();
    for (t, f) in frames.iter().enumerate() {
        let masks = render_instance_masks(&splats_from_cloud(f), &camera, 2, RADIUS_PX)?;
        let plane = camera.width * camera.height;
        for i in 0..2 {
            let p = dir.join(expand_pattern(MASK_PATTERN, &[("frame", t), ("instance", i)]));
            crate::image::write_mask(&p, camera.width, camera.height, &masks.bits()[i * plane..(i + 1) * plane])?;
        }
    }
    save_frames(&FrameSet { frames, correspondence: true, canonical_index: 0 }, dir, FRAME_PATTERN, PlyFormat::BinaryLittleEndian)?;
    let mut m = manifest(GRADCHECK_FRAMES, Some(&camera));
    m.keypoints = Some(write_keypoints(dir, &keypoints)?);
    m.masks = Some(MaskPattern { pattern: MASK_PATTERN.into(), instances: 2 });
    let manifest_path = dir.join("manifest.json");
    formats::write_json(&manifest_path, &m)?;
    let graph_path = dir.join("graph.json");
    formats::write_json(
        &graph_path,
        &GraphSpec::new(&MotionGraph::new(topology, vec![])?, &Theta::Deformable(params.joint_positions)),
    )?;
    Ok(SynthOutput { manifest: manifest_path, graph: graph_path, truth: None })
}
