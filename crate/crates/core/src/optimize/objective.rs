//! The per-frame fitting objective and its gradient.
//!
//! A frame's gradient is taken in two levels. The link-level tape holds the
//! graph parameters and produces the flat link features (see
//! `skinning::FeatureLayout`) plus the joint-only regularizers. Each splat
//! then gets a small tape whose leaves are just the features it reads; its
//! adjoints are summed into a feature adjoint buffer that seeds the reverse
//! sweep of the link-level tape. The data-loss gradient with respect to the
//! deformed positions is analytic.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::gradcheck::GradientProvider;
use super::losses::{
    canonical_reg_generic, data_loss, keypoint_reg_generic, mask_difference, DataMode, Keypoint,
};
use super::LossConfig;
use crate::autodiff::{Tape, Var};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::graph::Theta;
use crate::render::{render_instance_masks, InstanceMasks};
use crate::scalar::Real;
use crate::scene::Scene;
use crate::skinning::{blend_from_features, link_features, paint_from_features, FeatureLayout, LinkFeatures};

/// Observations of one frame. Absent keypoints or masks switch the matching
/// term off for that frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameData {
    pub points: Vec<Vec3>,
    pub keypoints: Option<Vec<Keypoint>>,
    pub masks: Option<InstanceMasks>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub frames: Vec<FrameData>,
    pub mode: DataMode,
    pub camera: Option<Camera>,
    /// Footprint radius used when projecting splats into instance masks.
    pub mask_radius_px: f64,
}

/// Weighted total and the raw value of each term for one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameTerms {
    pub data: f64,
    pub canonical: f64,
    pub keypoint: f64,
    pub mask: f64,
    pub total: f64,
}

impl FrameTerms {
    fn finish(mut self, cfg: &LossConfig) -> Self {
        self.total = cfg.lambda_data * self.data
            + cfg.lambda_canonical * self.canonical
            + cfg.lambda_keypoint * self.keypoint
            + cfg.lambda_mask * self.mask;
        self
    }
}

/// Index ranges inside the full parameter vector
/// `[theta_0 | .. | theta_{T-1} | gamma | phi]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub theta_len: usize,
    pub frames: usize,
    pub links: usize,
    pub tree: bool,
}

impl ParamLayout {
    pub fn theta(&self, frame: usize) -> Range<usize> {
        frame * self.theta_len..(frame + 1) * self.theta_len
    }

    pub fn gamma(&self) -> Range<usize> {
        let o = self.frames * self.theta_len;
        o..o + self.links
    }

    pub fn phi(&self) -> Range<usize> {
        let o = self.gamma().end;
        o..o + if self.tree { self.links } else { 0 }
    }

    pub fn len(&self) -> usize {
        self.phi().end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct StageA<T> {
    feats: LinkFeatures<T>,
    canonical: T,
    keypoint: T,
    keypoint_valid: usize,
}

struct FrameEval {
    terms: FrameTerms,
    regime: u64,
    data_grad: Option<Vec<Vec3>>,
}

/// Small FNV-1a fold used to fingerprint discrete choices.
fn mix(h: u64, v: u64) -> u64 {
    let mut h = h;
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

const FNV_SEED: u64 = 0xcbf2_9ce4_8422_2325;

fn sign_code(r: f64) -> u64 {
    if r > 0.0 {
        2
    } else if r < 0.0 {
        0
    } else {
        1
    }
}

pub struct SceneObjective<'a> {
    scene: &'a Scene,
    obs: &'a Observations,
    cfg: LossConfig,
    initial_joints: Vec<Vec3>,
    layout: ParamLayout,
    features: FeatureLayout,
    free: Vec<bool>,
    base: Vec<f64>,
    positions: Vec<Vec3>,
}

impl<'a> SceneObjective<'a> {
    pub fn new(scene: &'a Scene, obs: &'a Observations, cfg: &LossConfig, initial_joints: &[Vec3]) -> Result<Self> {
        cfg.validate()?;
        scene.validate()?;
        let topo = &scene.graph.topology;
        let frames = scene.motion.len();
        if obs.frames.len() != frames {
            return Err(Error::mismatch("observed frames", frames, obs.frames.len()));
        }
        if initial_joints.len() != topo.joint_count() {
            return Err(Error::mismatch("initial joints", topo.joint_count(), initial_joints.len()));
        }
        let needs_camera = obs.frames.iter().any(|f| {
            (cfg.lambda_keypoint > 0.0 && f.keypoints.is_some()) || (cfg.lambda_mask > 0.0 && f.masks.is_some())
        });
        if needs_camera {
            match &obs.camera {
                Some(c) => c.validate()?,
                None => return Err(Error::invalid("keypoint and mask terms need a camera")),
            }
        }
        for (t, f) in obs.frames.iter().enumerate() {
            if obs.mode == DataMode::Correspondence && !f.points.is_empty() && f.points.len() != scene.splats.len() {
                return Err(Error::invalid(alloc::format!(
                    "frame {t} has {} points for {} splats under correspondence",
                    f.points.len(),
                    scene.splats.len()
                )));
            }
            if let Some(k) = &f.keypoints {
                if k.len() != topo.joint_count() {
                    return Err(Error::mismatch("keypoints", topo.joint_count(), k.len()));
                }
            }
            if let (Some(m), Some(c)) = (&f.masks, &obs.camera) {
                if m.width != c.width || m.height != c.height || m.instances < scene.instance_count {
                    return Err(Error::invalid(alloc::format!("frame {t} masks do not match the camera")));
                }
            }
        }
        let layout = ParamLayout {
            theta_len: topo.theta_len(),
            frames,
            links: topo.link_count(),
            tree: topo.is_tree(),
        };
        let mut base = Vec::with_capacity(layout.len());
        for th in &scene.motion.frames {
            th.write_flat(&mut base);
        }
        base.extend_from_slice(&scene.painting.gammas);
        if layout.tree {
            base.extend_from_slice(&scene.graph.link_lengths);
        }
        let mut free = vec![false; layout.len()];
        for t in 0..frames {
            if t != scene.motion.canonical_index || cfg.learn_canonical {
                free[layout.theta(t)].fill(true);
            }
        }
        free[layout.gamma()].fill(cfg.learn_gamma);
        free[layout.phi()].fill(cfg.learn_phi);
        Ok(SceneObjective {
            scene,
            obs,
            cfg: *cfg,
            initial_joints: initial_joints.to_vec(),
            features: FeatureLayout::new(topo),
            layout,
            free,
            base,
            positions: scene.positions(),
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Full parameter vector of the scene the objective was built from.
    pub fn initial_params(&self) -> &[f64] {
        &self.base
    }

    pub fn is_free(&self, index: usize) -> bool {
        self.free[index]
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|&i| self.free[i]).collect()
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.free_indices().into_iter().map(|i| full[i]).collect()
    }

    pub fn scatter(&self, free: &[f64]) -> Result<Vec<f64>> {
        let idx = self.free_indices();
        if free.len() != idx.len() {
            return Err(Error::mismatch("free parameters", idx.len(), free.len()));
        }
        let mut full = self.base.clone();
        for (i, v) in idx.into_iter().zip(free) {
            full[i] = *v;
        }
        Ok(full)
    }

    /// Free parameters that frame `t` depends on.
    pub fn frame_indices(&self, t: usize) -> Vec<usize> {
        let c = self.scene.motion.canonical_index;
        let mut idx: Vec<usize> = self.layout.theta(c).collect();
        if t != c {
            idx.extend(self.layout.theta(t));
        }
        idx.extend(self.layout.gamma());
        idx.extend(self.layout.phi());
        idx.retain(|&i| self.free[i]);
        idx
    }

    fn paint_learnable(&self) -> bool {
        self.cfg.learn_gamma || self.cfg.learn_canonical
    }

    fn stage_a<T: Real>(&self, x: &[T], t: usize) -> Result<StageA<T>> {
        let topo = &self.scene.graph.topology;
        let c = self.scene.motion.canonical_index;
        let theta_0 = Theta::from_flat(topo, &x[self.layout.theta(c)])?;
        let theta_t = Theta::from_flat(topo, &x[self.layout.theta(t)])?;
        let feats = link_features(topo, &theta_0, &theta_t, &x[self.layout.phi()], &x[self.layout.gamma()])?;
        let canonical = if self.cfg.lambda_canonical > 0.0 {
            canonical_reg_generic(&feats.joints_0, &self.initial_joints)?
        } else {
            T::zero()
        };
        let (mut keypoint, mut keypoint_valid) = (T::zero(), 0);
        if self.cfg.lambda_keypoint > 0.0 {
            if let (Some(k), Some(cam)) = (&self.obs.frames[t].keypoints, &self.obs.camera) {
                let l = keypoint_reg_generic(&feats.joints_t, k, cam)?;
                keypoint = l.value;
                keypoint_valid = l.valid;
            }
        }
        Ok(StageA {
            feats,
            canonical,
            keypoint,
            keypoint_valid,
        })
    }

    /// Deformed positions from plain feature values, and the fingerprint of
    /// the link selections.
    fn deform(&self, vals: &[f64]) -> Result<(Vec<Vec3>, u64)> {
        let learn = self.paint_learnable();
        let (mode, top_k) = (self.scene.painting.mode, self.scene.painting.top_k);
        let mut get = |k: usize| vals[k];
        let mut regime = FNV_SEED;
        let mut out = Vec::with_capacity(self.positions.len());
        for (i, x0) in self.positions.iter().enumerate() {
            let pose = if learn {
                let entries = paint_from_features(&self.features, *x0, vals, mode, top_k, &mut get)?;
                if top_k.is_some() {
                    for (l, _) in &entries {
                        regime = mix(regime, *l as u64);
                    }
                }
                blend_from_features(&self.features, *x0, &entries, &mut get)?
            } else {
                blend_from_features(&self.features, *x0, self.scene.painting.weights(i), &mut get)?
            };
            out.push(pose.transform_point(*x0));
        }
        Ok((out, regime))
    }

    fn finish_frame(&self, t: usize, a_canonical: f64, a_keypoint: f64, vals: &[f64], want_grad: bool) -> Result<FrameEval> {
        let obs = &self.obs.frames[t];
        let (positions, mut regime) = self.deform(vals)?;
        let mut terms = FrameTerms {
            canonical: a_canonical,
            keypoint: a_keypoint,
            ..FrameTerms::default()
        };
        let mut data_grad = None;
        if self.cfg.lambda_data > 0.0 && !obs.points.is_empty() {
            let d = data_loss(&positions, &obs.points, self.obs.mode)?;
            terms.data = d.value;
            if want_grad {
                data_grad = Some(d.grad);
            }
        }
        if self.cfg.lambda_mask > 0.0 {
            if let (Some(m), Some(cam)) = (&obs.masks, &self.obs.camera) {
                let splats: Vec<_> = self
                    .scene
                    .splats
                    .iter()
                    .zip(&positions)
                    .map(|(s, p)| {
                        let mut s = *s;
                        s.pose.translation = *p;
                        s
                    })
                    .collect();
                let rendered = render_instance_masks(&splats, cam, m.instances, self.obs.mask_radius_px)?;
                terms.mask = mask_difference(&rendered, m);
                for (k, b) in rendered.bits().iter().enumerate() {
                    if *b {
                        regime = mix(regime, k as u64);
                    }
                }
            }
        }
        Ok(FrameEval {
            terms: terms.finish(&self.cfg),
            regime,
            data_grad,
        })
    }

    fn check_full(&self, full: &[f64]) -> Result<()> {
        if full.len() != self.layout.len() {
            return Err(Error::mismatch("parameters", self.layout.len(), full.len()));
        }
        Ok(())
    }

    fn eval_frame(&self, full: &[f64], t: usize) -> Result<FrameEval> {
        self.check_full(full)?;
        let a = self.stage_a::<f64>(full, t)?;
        let mut eval = self.finish_frame(t, a.canonical, a.keypoint, &a.feats.flat, false)?;
        if a.keypoint_valid > 0 {
            eval.regime = mix(eval.regime, self.keypoint_signs(&a.feats.joints_t, t));
        }
        Ok(eval)
    }

    /// Fingerprint of the residual signs of the L1 keypoint term, whose
    /// derivative jumps where a residual crosses zero.
    fn keypoint_signs(&self, joints: &[Vec3], t: usize) -> u64 {
        let (Some(k), Some(cam)) = (&self.obs.frames[t].keypoints, &self.obs.camera) else {
            return 0;
        };
        let mut h = FNV_SEED;
        for (j, kp) in joints.iter().zip(k).filter(|(_, kp)| kp.is_valid()) {
            let code = match cam.project(*j) {
                Some((u, v, _)) => 1 + 3 * sign_code(u - kp.x) + sign_code(v - kp.y),
                None => 0,
            };
            h = mix(h, code);
        }
        h
    }

    pub fn frame_terms(&self, full: &[f64], t: usize) -> Result<FrameTerms> {
        Ok(self.eval_frame(full, t)?.terms)
    }

    /// Sum of every frame's weighted loss.
    pub fn total(&self, full: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for t in 0..self.layout.frames {
            sum += self.eval_frame(full, t)?.terms.total;
        }
        Ok(sum)
    }

    /// Accumulate frame `t`'s gradient into `grad` (full layout) for every
    /// free parameter and return the frame's terms.
    pub fn frame_gradient(&self, full: &[f64], t: usize, grad: &mut [f64]) -> Result<FrameTerms> {
        self.check_full(full)?;
        if grad.len() != full.len() {
            return Err(Error::mismatch("gradient buffer", full.len(), grad.len()));
        }
        let relevant = self.frame_indices(t);
        let tape = Tape::with_capacity(1 << 14);
        let mut leaves: Vec<Var<'_>> = full.iter().map(|v| Var::constant(*v)).collect();
        for &i in &relevant {
            leaves[i] = tape.var(full[i]);
        }
        let a = self.stage_a(&leaves, t)?;
        let vals: Vec<f64> = a.feats.flat.iter().map(|v| v.value()).collect();
        let eval = self.finish_frame(t, a.canonical.value(), a.keypoint.value(), &vals, true)?;

        let mut feat_adj = vec![0.0; vals.len()];
        if let Some(g) = &eval.data_grad {
            self.splat_adjoints(&vals, g, self.cfg.lambda_data, &mut feat_adj)?;
        }
        let mut seeds: Vec<(Var<'_>, f64)> = feat_adj
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != 0.0)
            .map(|(k, s)| (a.feats.flat[k], *s))
            .collect();
        seeds.push((a.canonical, self.cfg.lambda_canonical));
        if a.keypoint_valid > 0 {
            seeds.push((a.keypoint, self.cfg.lambda_keypoint));
        }
        let adj = tape.adjoints(&seeds);
        for &i in &relevant {
            grad[i] += leaves[i].adjoint_in(&adj);
        }
        Ok(eval.terms)
    }

    /// Per-splat reverse sweeps, seeded with `scale * dL/dp`.
    fn splat_adjoints(&self, vals: &[f64], grad: &[Vec3], scale: f64, feat_adj: &mut [f64]) -> Result<()> {
        let learn = self.paint_learnable();
        let (mode, top_k) = (self.scene.painting.mode, self.scene.painting.top_k);
        let mut slot = vec![usize::MAX; vals.len()];
        let mut tape = Tape::with_capacity(4096);
        for (i, x0) in self.positions.iter().enumerate() {
            let g = grad[i] * scale;
            if g == Vec3::ZERO {
                continue;
            }
            tape.clear();
            let mut local: Vec<(usize, Var<'_>)> = Vec::new();
            let p = {
                let tb = &tape;
                let mut get = |k: usize| -> Var<'_> {
                    if slot[k] != usize::MAX {
                        return local[slot[k]].1;
                    }
                    let v = tb.var(vals[k]);
                    slot[k] = local.len();
                    local.push((k, v));
                    v
                };
                let x = Vec3::<Var<'_>>::from_f64(*x0);
                let pose = if learn {
                    let entries = paint_from_features(&self.features, x, vals, mode, top_k, &mut get)?;
                    blend_from_features(&self.features, x, &entries, &mut get)?
                } else {
                    let entries: Vec<(usize, Var<'_>)> = self
                        .scene
                        .painting
                        .weights(i)
                        .iter()
                        .map(|(l, w)| (*l, Var::constant(*w)))
                        .collect();
                    blend_from_features(&self.features, x, &entries, &mut get)?
                };
                pose.transform_point(x)
            };
            let adj = tape.adjoints(&[(p.x, g.x), (p.y, g.y), (p.z, g.z)]);
            for (k, v) in &local {
                feat_adj[*k] += v.adjoint_in(&adj);
                slot[*k] = usize::MAX;
            }
        }
        Ok(())
    }

    /// Project a full parameter vector back onto its constraints:
    /// unit quaternions and positive radii and lengths.
    pub fn project(&self, full: &mut [f64]) {
        if self.layout.tree {
            for t in 0..self.layout.frames {
                let r = self.layout.theta(t);
                normalize4(&mut full[r.start..r.start + 4]);
                for q in full[r.start + 7..r.end].chunks_exact_mut(4) {
                    normalize4(q);
                }
            }
            for v in &mut full[self.layout.phi()] {
                *v = v.max(1e-6);
            }
        }
        for v in &mut full[self.layout.gamma()] {
            *v = v.max(1e-6);
        }
    }

    /// Write a full parameter vector into a copy of the scene, repainting at
    /// the resulting canonical parameters.
    pub fn to_scene(&self, full: &[f64]) -> Result<Scene> {
        self.check_full(full)?;
        let mut scene = self.scene.clone();
        let topo = &scene.graph.topology;
        let mut frames = Vec::with_capacity(self.layout.frames);
        for t in 0..self.layout.frames {
            let mut th = Theta::from_flat(topo, &full[self.layout.theta(t)])?;
            th.normalize();
            frames.push(th);
        }
        scene.motion.frames = frames;
        if self.layout.tree {
            scene.graph.link_lengths = full[self.layout.phi()].to_vec();
        }
        if self.paint_learnable() {
            scene.repaint(full[self.layout.gamma()].to_vec())?;
        }
        Ok(scene)
    }
}

fn normalize4(q: &mut [f64]) {
    let n = libm::sqrt(q.iter().map(|v| v * v).sum::<f64>());
    if n > 0.0 {
        for v in q {
            *v /= n;
        }
    }
}

/// The total objective as a function of the free parameters only.
impl GradientProvider for SceneObjective<'_> {
    fn evaluate(&self, params: &[f64]) -> Result<f64> {
        self.total(&self.scatter(params)?)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let full = self.scatter(params)?;
        let mut g = vec![0.0; full.len()];
        for t in 0..self.layout.frames {
            self.frame_gradient(&full, t, &mut g)?;
        }
        Ok(self.gather(&g))
    }

    fn regime(&self, params: &[f64]) -> Result<u64> {
        let full = self.scatter(params)?;
        let mut h = FNV_SEED;
        for t in 0..self.layout.frames {
            h = mix(h, self.eval_frame(&full, t)?.regime);
        }
        Ok(h)
    }
}
