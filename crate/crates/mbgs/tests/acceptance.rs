//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mbgs::formats::{self, read_json, GraphSpec};
use mbgs::frames::Dataset;
use mbgs::ply::{read_ply, write_ply, PlyFormat, PointCloud};
use mbgs::server::client::Client;
use mbgs::synth::{self, SynthKind, TruthFile};
use mbgs_core::geometry::{dq_blend, dq_to_pose, pose_to_dq, Pose, Quat, Vec3};
use mbgs_core::graph::{
    farthest_point_sample, forward_kinematics, inverse_kinematics, point_segment_distance, projection_point,
    GraphTopology, IkOptions, IkTarget, KinematicTreeParams, Link, MotionGraph, Theta, TreeTheta, UpTriangle,
};
use mbgs_core::keyframe::interpolate_keyframes;
use mbgs_core::optimize::{fit_sequence_from, FitOptions, LossConfig, Observations, FrameData, DataMode};
use mbgs_core::scene::{PaintOptions, Scene};
use mbgs_core::skinning::{paint_weights, weights_from_distances, PaintMode, Splat};

type Check = Result<(bool, String), String>;

fn quat(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 0.1 {
            return q.normalized();
        }
    }
}

fn vec3(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(quat(rng), vec3(rng, 3.0))
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["mbgs"];
    argv.extend_from_slice(args);
    let code = mbgs::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for q in points {
        lo = Vec3::new(lo.x.min(q.x), lo.y.min(q.y), lo.z.min(q.z));
        hi = Vec3::new(hi.x.max(q.x), hi.y.max(q.y), hi.z.max(q.z));
    }
    (hi - lo).norm()
}

/// RMSE between the fitted scene's frames and the observed frames.
fn correspondence_rmse(scene: &Scene, ds: &Dataset) -> mbgs::Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (t, frame) in ds.frames.frames.iter().enumerate() {
        let got = scene.positions_at(&scene.motion.frames[t])?;
        for (a, b) in got.iter().zip(&frame.positions) {
            sum += (*a - *b).norm_squared();
            n += 1;
        }
    }
    Ok((sum / n as f64).sqrt())
}

// A1 -------------------------------------------------------------------

fn na_quat(q: Quat) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q.w, q.x, q.y, q.z))
}

fn homogeneous(rot: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

fn a1_fk_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let parents: Vec<usize> = (1..n).map(|j| rng.random_range(0..j)).collect();
        let links: Vec<Link> = parents.iter().enumerate().map(|(i, &p)| Link::new(p, i + 1)).collect();
        let topo = GraphTopology::kinematic_tree(n, links, 0).map_err(|e| e.to_string())?;
        let mut theta = TreeTheta::rest(n);
        theta.root = pose(&mut rng);
        for r in &mut theta.rotations {
            *r = quat(&mut rng);
        }
        let lengths: Vec<f64> = (1..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let (joints, _) = forward_kinematics(&topo, &KinematicTreeParams { theta: theta.clone(), link_lengths: lengths.clone() })
            .map_err(|e| e.to_string())?;
        let rot = |q: Quat| *na_quat(q).to_rotation_matrix().matrix();
        let t = theta.root.translation;
        let mut m = vec![Matrix4::identity(); n];
        m[0] = homogeneous(Matrix3::identity(), Vector3::new(t.x, t.y, t.z))
            * homogeneous(rot(theta.root.rotation), Vector3::zeros())
            * homogeneous(rot(theta.rotations[0]), Vector3::zeros());
        for (i, &parent) in parents.iter().enumerate() {
            let c = i + 1;
            m[c] = m[parent]
                * homogeneous(Matrix3::identity(), Vector3::new(lengths[i], 0.0, 0.0))
                * homogeneous(rot(theta.rotations[c]), Vector3::zeros());
        }
        for (j, mj) in joints.iter().zip(&m) {
            worst = worst.max((j.x - mj[(0, 3)]).abs()).max((j.y - mj[(1, 3)]).abs()).max((j.z - mj[(2, 3)]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst < 1e-9 && secs < 1.0, format!("max abs error {worst:.2e} (< 1e-9), {secs:.3} s (< 1 s)")))
}

// A2 -------------------------------------------------------------------

fn equivariance_error(rng: &mut ChaCha8Rng, tree: bool) -> Result<f64, String> {
    let g = pose(rng);
    let pts: Vec<Vec3> = (0..20).map(|_| vec3(rng, 2.5)).collect();
    let splats: Vec<Splat> = pts.iter().map(|q| Splat::point(*q)).collect();
    let (scene, moved) = if tree {
        let topo = GraphTopology::kinematic_tree(4, vec![Link::new(0, 1), Link::new(1, 2), Link::new(1, 3)], 0)
            .map_err(|e| e.to_string())?;
        let mut th = TreeTheta::rest(4);
        th.root = pose(rng);
        for r in &mut th.rotations {
            *r = quat(rng);
        }
        let graph = MotionGraph::new(topo, vec![1.0, 0.7, 0.5]).map_err(|e| e.to_string())?;
        let mut moved = th.clone();
        moved.root = g * th.root;
        let scene = Scene::bind(splats, graph, Theta::Tree(th), 2, 0, PaintOptions::default()).map_err(|e| e.to_string())?;
        (scene, Theta::Tree(moved))
    } else {
        let joints = loop {
            let j: Vec<Vec3> = (0..4).map(|_| vec3(rng, 2.0)).collect();
            let spread = (0..4).all(|a| (a + 1..4).all(|b| j[a].distance(&j[b]) > 0.2));
            let fair = [(0, 1, 2), (1, 2, 3), (2, 3, 1)].iter().all(|&(s, e, a)| {
                let (u, v) = (j[e] - j[s], j[a] - j[s]);
                u.cross(&v).norm() > 0.05 * u.norm() * v.norm()
            });
            if spread && fair {
                break j;
            }
        };
        let up = vec![UpTriangle { link: 0, apex: 2 }, UpTriangle { link: 1, apex: 3 }, UpTriangle { link: 2, apex: 1 }];
        let topo = GraphTopology::deformable(4, vec![Link::new(0, 1), Link::new(1, 2), Link::new(2, 3)], up)
            .map_err(|e| e.to_string())?;
        let graph = MotionGraph::new(topo, vec![]).map_err(|e| e.to_string())?;
        let moved = Theta::Deformable(joints.iter().map(|j| g.transform_point(*j)).collect());
        let scene = Scene::bind(splats, graph, Theta::Deformable(joints), 2, 0, PaintOptions::default()).map_err(|e| e.to_string())?;
        (scene, moved)
    };
    let out = scene.positions_at(&moved).map_err(|e| e.to_string())?;
    Ok(out.iter().zip(&pts).map(|(o, q)| o.distance(&g.transform_point(*q))).fold(0.0, f64::max))
}

fn a2_dqs() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut orth, mut det, mut one_hot_exact) = (0.0f64, 0.0f64, true);
    for _ in 0..1000 {
        let k = rng.random_range(2..=5);
        let dqs: Vec<_> = (0..k).map(|_| pose_to_dq(&pose(&mut rng))).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let b = dq_blend(&dqs, &w).map_err(|e| e.to_string())?;
        let m = b.rotation.to_matrix();
        let r = Matrix3::from_fn(|i, j| m[i][j]);
        orth = orth.max((r.transpose() * r - Matrix3::identity()).abs().max());
        det = det.max((r.determinant() - 1.0).abs());
        let hot = rng.random_range(0..k);
        let w1: Vec<f64> = (0..k).map(|i| if i == hot { 1.0 } else { 0.0 }).collect();
        let b1 = dq_blend(&dqs, &w1).map_err(|e| e.to_string())?;
        one_hot_exact &= b1 == dq_to_pose(&dqs[hot]).map_err(|e| e.to_string())?;
    }
    let mut equi: f64 = 0.0;
    for i in 0..200 {
        equi = equi.max(equivariance_error(&mut rng, i % 2 == 0)?);
    }
    let pass = orth < 1e-9 && det < 1e-9 && one_hot_exact && equi < 1e-9;
    Ok((
        pass,
        format!(
            "|R^T R - I|inf {orth:.1e}, |det - 1| {det:.1e} (< 1e-9), one-hot exact: {one_hot_exact}, rigid equivariance {equi:.1e} (< 1e-9, both kinds)"
        ),
    ))
}

// A3 / A4 / A11 -----------------------------------------------------------

fn chain_angle_error(truth: &TruthFile, fitted: &Scene) -> Result<f64, String> {
    let topo = &fitted.graph.topology;
    let mut worst: f64 = 0.0;
    for (t, dto) in truth.frames.iter().enumerate() {
        let want = dto.to_theta(topo).map_err(|e| e.to_string())?;
        let (w, g) = (want.as_tree().ok_or("tree truth")?, fitted.motion.frames[t].as_tree().ok_or("tree fit")?);
        let root_w = w.root.rotation * w.rotations[0];
        let root_g = (g.root.rotation * g.rotations[0]).normalized();
        worst = worst.max(root_w.angle_to(&root_g));
        for j in 1..3 {
            worst = worst.max(w.rotations[j].angle_to(&g.rotations[j].normalized()));
        }
    }
    Ok(worst.to_degrees())
}

fn a3_chain(dir: &Path) -> Check {
    let start = Instant::now();
    let out = synth::generate(SynthKind::Chain, dir, 0).map_err(|e| e.to_string())?;
    let ckpt = dir.join("fit.json");
    let (code, stdout, stderr) = cli(&[
        "fit",
        "--manifest",
        p(&out.manifest),
        "--graph",
        p(&out.graph),
        "--out",
        p(&ckpt),
        "--iters",
        "30000",
        "--lr",
        "0.1",
        "--lambda-kp",
        "0",
        "--fix-gamma",
        "--fix-phi",
        "--fix-canonical",
        "--seed",
        "0",
    ]);
    if code != 0 {
        return Err(format!("fit exited {code}: {stderr}"));
    }
    if !stdout.contains("final loss") {
        return Err("fit did not report a final loss".into());
    }
    let fitted = formats::load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let truth: TruthFile = read_json(out.truth.as_ref().unwrap()).map_err(|e| e.to_string())?;
    let angle = chain_angle_error(&truth, &fitted.scene)?;
    let ds = Dataset::load(&out.manifest).map_err(|e| e.to_string())?;
    let rmse = correspondence_rmse(&fitted.scene, &ds).map_err(|e| e.to_string())?;
    let diag = bbox_diagonal(&ds.frames.canonical().positions);
    let secs = start.elapsed().as_secs_f64();
    let pass = angle < 2.0 && rmse < 0.01 * diag && secs < 300.0;
    Ok((
        pass,
        format!("max angle error {angle:.3} deg (< 2), RMSE {:.3}% of bbox diagonal (< 1%), {secs:.1} s (< 300 s)", 100.0 * rmse / diag),
    ))
}

fn a4_sheet(dir: &Path) -> Check {
    let start = Instant::now();
    let out = synth::generate(SynthKind::Sheet, dir, 0).map_err(|e| e.to_string())?;
    let spec: GraphSpec = read_json(&out.graph).map_err(|e| e.to_string())?;
    if spec.graph.joint_count != 32 {
        return Err(format!("sheet graph has {} joints", spec.graph.joint_count));
    }
    let ckpt = dir.join("fit.json");
    let (code, _, stderr) = cli(&[
        "fit",
        "--manifest",
        p(&out.manifest),
        "--graph",
        p(&out.graph),
        "--out",
        p(&ckpt),
        "--iters",
        "600",
        "--lr",
        "0.01",
        "--top-k",
        "8",
    ]);
    if code != 0 {
        return Err(format!("fit exited {code}: {stderr}"));
    }
    let fitted = formats::load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let ds = Dataset::load(&out.manifest).map_err(|e| e.to_string())?;
    let rmse = correspondence_rmse(&fitted.scene, &ds).map_err(|e| e.to_string())?;
    let diag = bbox_diagonal(&ds.frames.canonical().positions);
    let secs = start.elapsed().as_secs_f64();
    let pass = rmse < 0.02 * diag && secs < 600.0;
    Ok((pass, format!("RMSE {:.3}% of bbox diagonal (< 2%), {secs:.1} s (< 600 s)", 100.0 * rmse / diag)))
}

fn a11_determinism(dir: &Path) -> Check {
    let out = synth::generate(SynthKind::Chain, dir, 0).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for name in ["a.json", "b.json"] {
        let ckpt = dir.join(name);
        let (code, _, stderr) = cli(&[
            "fit", "--manifest", p(&out.manifest), "--graph", p(&out.graph), "--out", p(&ckpt), "--iters", "120", "--seed", "0",
        ]);
        if code != 0 {
            return Err(format!("fit exited {code}: {stderr}"));
        }
        bytes.push(std::fs::read(&ckpt).map_err(|e| e.to_string())?);
    }
    let fit_same = bytes[0] == bytes[1];

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cloud = PointCloud::new((0..500).map(|_| vec3(&mut rng, 1e3)).collect());
    cloud.positions.push(Vec3::new(f64::MIN_POSITIVE, -0.0, 1.0 / 3.0));
    cloud.colors = (0..cloud.len()).map(|i| [i as u8, (i * 7) as u8, 255]).collect();
    cloud.instance_ids = Some((0..cloud.len() as u32).collect());
    let mut ply_same = true;
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud, format).map_err(|e| e.to_string())?;
        let back = read_ply(&buf[..]).map_err(|e| e.to_string())?;
        ply_same &= back.colors == cloud.colors && back.instance_ids == cloud.instance_ids;
        ply_same &= back.positions.iter().zip(&cloud.positions).all(|(a, b)| {
            a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits() && a.z.to_bits() == b.z.to_bits()
        });
    }
    Ok((fit_same && ply_same, format!("checkpoints identical: {fit_same}, PLY ascii+binary bit-exact: {ply_same}")))
}

// A5 -------------------------------------------------------------------

fn a5_gradcheck(dir: &Path) -> Check {
    let out = synth::generate(SynthKind::Gradcheck, dir, 0).map_err(|e| e.to_string())?;
    let ds = Dataset::load(&out.manifest).map_err(|e| e.to_string())?;
    let spec: GraphSpec = read_json(&out.graph).map_err(|e| e.to_string())?;
    let all_terms = ds.keypoints.is_some() && ds.masks.is_some() && ds.frames.correspondence;
    let sizes = spec.graph.joint_count == 20 && ds.frames.canonical().len() == 500;
    let (code, stdout, stderr) = cli(&["check-grad", "--manifest", p(&out.manifest), "--graph", p(&out.graph)]);
    let line = stdout.lines().find(|l| l.starts_with("max relative error")).unwrap_or("").to_string();
    let (sab, _, _) = cli(&["check-grad", "--manifest", p(&out.manifest), "--graph", p(&out.graph), "--sabotage"]);
    Ok((
        code == 0 && sab == 3 && all_terms && sizes,
        format!("{line} (< 1e-4), exit {code}; sabotaged gradient exit {sab} (3); all four terms: {all_terms}; 20 joints / 500 splats: {sizes}{}",
            if code == 0 { String::new() } else { format!("; {}", stderr.trim()) }),
    ))
}

// A6 / A7 ----------------------------------------------------------------

fn a6_painting() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut simplex, mut monotone) = (0.0f64, true);
    for i in 0..1000 {
        let l = rng.random_range(1..8);
        let segs: Vec<(Vec3, Vec3)> = (0..l).map(|_| (vec3(&mut rng, 3.0), vec3(&mut rng, 3.0))).collect();
        let gammas: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..4.0)).collect();
        let shared = vec![gammas[0]; l];
        let x = vec3(&mut rng, 3.0);
        let mode = if i % 2 == 0 { PaintMode::SoftmaxOfKernel } else { PaintMode::NormalizedKernel };
        let top_k = if i % 3 == 0 { Some(rng.random_range(1..=l)) } else { None };
        let w = paint_weights(x, &segs, &gammas, mode, top_k).map_err(|e| e.to_string())?;
        simplex = simplex.max((w.iter().sum::<f64>() - 1.0).abs());
        if w.iter().any(|v| *v < 0.0) {
            simplex = f64::INFINITY;
        }
        let w = paint_weights(x, &segs, &shared, mode, top_k).map_err(|e| e.to_string())?;
        let d: Vec<f64> = segs.iter().map(|(s, e)| point_segment_distance(x, *s, *e)).collect();
        let nearest = (0..l).fold(0, |b, k| if d[k] < d[b] { k } else { b });
        let max = w.iter().cloned().fold(0.0, f64::max);
        monotone &= w[nearest] >= max;
    }
    let e = std::f64::consts::E;
    let w = weights_from_distances(&[0.0, f64::INFINITY], &[1.0, 1.0], PaintMode::SoftmaxOfKernel, None).map_err(|e| e.to_string())?;
    let lit = (w[0] - e / (e + 1.0)).abs().max((w[1] - 1.0 / (e + 1.0)).abs());
    Ok((
        simplex <= 1e-12 && lit <= 1e-9 && monotone,
        format!("simplex deviation {simplex:.1e} (<= 1e-12), softmax-of-kernel example error {lit:.1e} (<= 1e-9), nearest-link maximal: {monotone}"),
    ))
}

fn a7_projection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut clamped) = (0.0f64, 0);
    for _ in 0..1000 {
        let (s0, e0, st, et) = (vec3(&mut rng, 2.0), vec3(&mut rng, 2.0), vec3(&mut rng, 2.0), vec3(&mut rng, 2.0));
        if s0.distance(&e0) < 1e-3 || st.distance(&et) < 1e-3 {
            continue;
        }
        let x = vec3(&mut rng, 5.0);
        let pp = projection_point((s0, e0), (st, et), x).map_err(|e| e.to_string())?;
        if pp.ratio == 0.0 || pp.ratio == 1.0 {
            clamped += 1;
        }
        let r0 = pp.canonical.distance(&s0) / e0.distance(&s0);
        let rt = pp.moved.distance(&st) / et.distance(&st);
        worst = worst.max((r0 - rt).abs());
    }
    Ok((worst < 1e-9 && clamped > 0, format!("ratio mismatch {worst:.1e} (< 1e-9), {clamped} clamped cases included")))
}

// A8 -------------------------------------------------------------------

fn a8_canonical_regularization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let graph = synth::chain_graph();
    let total: f64 = synth::CHAIN_LENGTHS.iter().sum();
    let pts: Vec<Vec3> = (0..600)
        .map(|_| {
            let (r, a) = (0.08 * rng.random::<f64>().sqrt(), 2.0 * std::f64::consts::PI * rng.random::<f64>());
            Vec3::new(rng.random::<f64>() * total, r * a.cos(), r * a.sin())
        })
        .collect();
    let truth = Scene::bind(pts.iter().map(|q| Splat::point(*q)).collect(), graph.clone(), synth::chain_theta(0), 6, 0, PaintOptions::default())
        .map_err(|e| e.to_string())?;
    let frames: Vec<FrameData> = (0..6)
        .map(|t| {
            let clean = truth.positions_at(&synth::chain_theta(t + 2 * (t > 0) as usize)).expect("deform");
            let noisy = clean
                .iter()
                .map(|q| {
                    if t == 0 {
                        *q
                    } else {
                        *q + Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
                    }
                })
                .collect();
            FrameData { points: noisy, ..FrameData::default() }
        })
        .collect();
    let obs = Observations { frames, mode: DataMode::Correspondence, camera: None, mask_radius_px: 1.0 };
    let mut start = TreeTheta::rest(4);
    start.root = Pose::from_translation(Vec3::new(0.1, 0.15, -0.1));
    start.rotations[0] = Quat::from_axis_angle(Vec3::Z, 0.12);
    start.rotations[1] = Quat::from_axis_angle(Vec3::Y, -0.15);
    let scene = Scene::bind(truth.splats.clone(), graph.clone(), Theta::Tree(start.clone()), 6, 0, PaintOptions::default())
        .map_err(|e| e.to_string())?;
    let anchor = graph.joint_positions(&Theta::Tree(start)).map_err(|e| e.to_string())?;
    let drift = |lambda: f64| -> Result<f64, String> {
        let cfg = LossConfig { lambda_canonical: lambda, lambda_keypoint: 0.0, lambda_mask: 0.0, learn_gamma: false, learn_phi: false, ..LossConfig::default() };
        let fit = fit_sequence_from(&scene, &obs, &cfg, &FitOptions { iters: 600, lr: 5e-3, seed: 0, strict: false }, &anchor)
            .map_err(|e| e.to_string())?;
        let joints = fit.scene.graph.joint_positions(fit.scene.canonical()).map_err(|e| e.to_string())?;
        Ok(joints.iter().zip(&anchor).map(|(a, b)| a.distance(b)).fold(0.0, f64::max))
    };
    let (with, without) = (drift(10.0)?, drift(0.0)?);
    Ok((with < 1e-2 && without > 1e-1, format!("max canonical drift {with:.2e} with lambda 10 (< 1e-2), {without:.2e} with lambda 0 (> 1e-1)")))
}

// A9 / A10 ---------------------------------------------------------------

fn chain(n: usize) -> (GraphTopology, Vec<f64>) {
    let links = (1..=n).map(|i| Link::new(i - 1, i)).collect();
    (GraphTopology::kinematic_tree(n + 1, links, 0).expect("chain"), vec![1.0; n])
}

fn a9_ik() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = 2 + case % 5;
        let (topo, lengths) = chain(n);
        let mut goal = TreeTheta::rest(n + 1);
        for r in goal.rotations.iter_mut().take(n) {
            *r = Quat::from_small_rotation(vec3(&mut rng, 1.0)).normalized();
        }
        let (joints, _) = forward_kinematics(&topo, &KinematicTreeParams { theta: goal, link_lengths: lengths.clone() })
            .map_err(|e| e.to_string())?;
        let mut init = TreeTheta::rest(n + 1);
        for r in init.rotations.iter_mut().take(n) {
            *r = Quat::from_small_rotation(vec3(&mut rng, 0.3)).normalized();
        }
        let params = KinematicTreeParams { theta: init, link_lengths: lengths };
        let r = inverse_kinematics(&topo, &params, &[(n, IkTarget::Position(joints[n]))], &IkOptions::default())
            .map_err(|e| e.to_string())?;
        let (got, _) = forward_kinematics(&topo, &r.params).map_err(|e| e.to_string())?;
        worst = worst.max(got[n].distance(&joints[n]));
    }
    let mut gap: f64 = 0.0;
    let mut flagged = true;
    for n in 2..=6 {
        let (topo, lengths) = chain(n);
        let dir = vec3(&mut rng, 1.0).try_normalized(1e-9).unwrap_or(Vec3::X);
        let reach: f64 = lengths.iter().sum();
        let target = dir * (reach + 0.5 + n as f64 * 0.1);
        let params = KinematicTreeParams { theta: TreeTheta::rest(n + 1), link_lengths: lengths };
        let r = inverse_kinematics(&topo, &params, &[(n, IkTarget::Position(target))], &IkOptions::default())
            .map_err(|e| e.to_string())?;
        flagged &= !r.reached;
        gap = gap.max((r.residual - (target.norm() - reach)).abs());
    }
    Ok((
        worst < 1e-6 && flagged && gap <= 1e-6,
        format!("reachable error {worst:.1e} (< 1e-6, 100 targets), unreachable flagged: {flagged}, residual vs closest-point gap {gap:.1e} (<= 1e-6)"),
    ))
}

fn greedy_fps(cloud: &[Vec3], count: usize) -> Vec<usize> {
    let centroid = cloud.iter().fold(Vec3::ZERO, |a, q| a + *q) * (1.0 / cloud.len() as f64);
    let seed = (0..cloud.len()).fold(0, |b, i| if cloud[i].distance(&centroid) < cloud[b].distance(&centroid) { i } else { b });
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < count {
        let reference = if picked.is_empty() { vec![seed] } else { picked.clone() };
        let score = |i: usize| reference.iter().map(|&r| cloud[i].distance(&cloud[r])).fold(f64::INFINITY, f64::min);
        picked.push((0..cloud.len()).fold(0, |b, i| if score(i) > score(b) { i } else { b }));
    }
    picked
}

/// Every pick after the first maximizes the minimum distance to the earlier picks.
fn is_greedy(cloud: &[Vec3], picked: &[usize]) -> bool {
    (1..picked.len()).all(|k| {
        let score = |i: usize| picked[..k].iter().map(|&r| cloud[i].distance(&cloud[r])).fold(f64::INFINITY, f64::min);
        let best = (0..cloud.len()).map(score).fold(f64::NEG_INFINITY, f64::max);
        score(picked[k]) == best
    })
}

fn a10_fps() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for case in 0..200 {
        let n = 2 + case % 63;
        let cloud: Vec<Vec3> = (0..n).map(|_| vec3(&mut rng, 1.0)).collect();
        let k = rng.random_range(1..=n);
        let got = farthest_point_sample(&cloud, k).map_err(|e| e.to_string())?;
        if got != greedy_fps(&cloud, k) || !is_greedy(&cloud, &got) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches against brute-force greedy selection over 200 clouds of 2..64 points")))
}

// S1 -------------------------------------------------------------------

fn expect_ok(v: &serde_json::Value) -> Result<&serde_json::Value, String> {
    if v["ok"] == json!(true) {
        Ok(v)
    } else {
        Err(format!("server rejected a request: {v}"))
    }
}

fn s1_parity(dir: &Path) -> Check {
    let out = synth::generate(SynthKind::Chain, &dir.join("data"), 0).map_err(|e| e.to_string())?;
    let ckpt = dir.join("chain.json");
    let (code, _, stderr) = cli(&[
        "fit", "--manifest", p(&out.manifest), "--graph", p(&out.graph), "--out", p(&ckpt), "--iters", "60",
    ]);
    if code != 0 {
        return Err(format!("fit exited {code}: {stderr}"));
    }
    let export_root = dir.join("exports");
    let addr = mbgs::server::spawn(&[ckpt.clone()], &export_root, "127.0.0.1:0", 2).map_err(|e| e.to_string())?;
    let mut c = Client::connect(addr).map_err(|e| e.to_string())?;
    let state = c.request(json!({"type": "load_scene", "scene": "chain"})).map_err(|e| e.to_string())?;
    let session = expect_ok(&state)?["session"].as_str().ok_or("no session id")?.to_string();
    let mut rev = state["revision"].as_u64().ok_or("no revision")?;
    let cap = c.request(json!({"type": "capture_keyframe", "session": session, "revision": rev, "time": 0.0})).map_err(|e| e.to_string())?;
    rev = expect_ok(&cap)?["revision"].as_u64().ok_or("no revision")?;
    let q = Quat::from_axis_angle(Vec3::Z, 0.8).as_array();
    let e = c
        .request(json!({"type": "apply_edit", "session": session, "revision": rev, "edit": {"kind": "set_joint_rotation", "joint": 1, "rotation": q}}))
        .map_err(|e| e.to_string())?;
    rev = expect_ok(&e)?["revision"].as_u64().ok_or("no revision")?;
    let e = c
        .request(json!({"type": "apply_edit", "session": session, "revision": rev, "edit": {"kind": "drag_joint_group", "joints": [3], "delta": [0.0, 0.3, 0.2]}}))
        .map_err(|e| e.to_string())?;
    rev = expect_ok(&e)?["revision"].as_u64().ok_or("no revision")?;
    let cap = c.request(json!({"type": "capture_keyframe", "session": session, "revision": rev, "time": 1.0})).map_err(|e| e.to_string())?;
    rev = expect_ok(&cap)?["revision"].as_u64().ok_or("no revision")?;

    let mid = c.request(json!({"type": "get_state", "session": session, "time": 0.5})).map_err(|e| e.to_string())?;
    let preview: Vec<[f64; 3]> = serde_json::from_value(expect_ok(&mid)?["preview"]["positions"].clone()).map_err(|e| e.to_string())?;

    let exp = c
        .request(json!({"type": "export_animation", "session": session, "revision": rev, "frame_count": 5, "out_dir": "server"}))
        .map_err(|e| e.to_string())?;
    let files: Vec<String> = serde_json::from_value(expect_ok(&exp)?["files"].clone()).map_err(|e| e.to_string())?;

    let server_dir = export_root.join("server");
    let cli_dir = dir.join("cli");
    let track = server_dir.join("track.json");
    let (code, _, stderr) = cli(&[
        "animate", "--checkpoint", p(&ckpt), "--keyframes", p(&track), "--frames", "5", "--out", p(&cli_dir),
    ]);
    if code != 0 {
        return Err(format!("animate exited {code}: {stderr}"));
    }
    let mut identical = files.len() == 6;
    for f in &files {
        let name = Path::new(f).file_name().ok_or("bad file name")?;
        let a = std::fs::read(f).map_err(|e| e.to_string())?;
        let b = std::fs::read(cli_dir.join(name)).map_err(|e| e.to_string())?;
        identical &= a == b;
    }

    let fitted = formats::load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let track = formats::load_keyframes(&track, &fitted.scene.graph.topology).map_err(|e| e.to_string())?;
    let key = interpolate_keyframes(&track, 0.5).map_err(|e| e.to_string())?;
    let want = fitted.scene.deform_to(&key.theta).map_err(|e| e.to_string())?;
    let mid_err = preview
        .iter()
        .zip(&want)
        .map(|(a, s)| Vec3::from_array(*a).distance(&s.position()))
        .fold(0.0, f64::max);
    let complete = preview.len() == want.len();
    Ok((
        identical && complete && mid_err <= 1e-9,
        format!("{} exported files byte-identical to CLI animate: {identical}; scripted midpoint error {mid_err:.1e} (<= 1e-9)", files.len()),
    ))
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| -> PathBuf {
        let d = root.path().join(name);
        std::fs::create_dir_all(&d).expect("create dir");
        d
    };
    let criteria: Vec<(&str, &str, Box<dyn FnOnce() -> Check>)> = vec![
        ("A1", "forward kinematics oracle", Box::new(a1_fk_oracle)),
        ("A2", "dual-quaternion validity and equivariance", Box::new(a2_dqs)),
        ("A3", "synthetic kinematic recovery", Box::new({ let d = sub("a3"); move || a3_chain(&d) })),
        ("A4", "synthetic deformable recovery", Box::new({ let d = sub("a4"); move || a4_sheet(&d) })),
        ("A5", "gradient check", Box::new({ let d = sub("a5"); move || a5_gradcheck(&d) })),
        ("A6", "weight painting", Box::new(a6_painting)),
        ("A7", "projection-point ratio invariance", Box::new(a7_projection)),
        ("A8", "canonical regularization", Box::new(a8_canonical_regularization)),
        ("A9", "inverse kinematics round trip", Box::new(a9_ik)),
        ("A10", "farthest-point sampling oracle", Box::new(a10_fps)),
        ("A11", "determinism", Box::new({ let d = sub("a11"); move || a11_determinism(&d) })),
        ("S1", "server export parity (scripted client)", Box::new({ let d = sub("s1"); move || s1_parity(&d) })),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = Duration::from_secs_f64(t.elapsed().as_secs_f64());
        let (pass, detail) = match result {
            Ok(Ok((pass, detail))) => (pass, detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {id} {name}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
