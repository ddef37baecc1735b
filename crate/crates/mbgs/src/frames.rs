//! Frame sequences on disk and the datasets described by manifests.

use std::path::{Path, PathBuf};

use mbgs_core::camera::Camera;
use mbgs_core::graph::DepthImage;
use mbgs_core::optimize::{DataMode, FrameData, Keypoint, Observations};
use mbgs_core::render::InstanceMasks;
use mbgs_core::skinning::Splat;

use crate::error::{Error, Result};
use crate::formats::{self, expand_pattern, Manifest};
use crate::ply::{self, PlyFormat, PointCloud};

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<PointCloud>,
    pub correspondence: bool,
    pub canonical_index: usize,
}

impl FrameSet {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Invalid("a frame set needs at least one frame".into()));
        }
        if self.canonical_index >= self.frames.len() {
            return Err(Error::Invalid(format!(
                "canonical index {} outside 0..{}",
                self.canonical_index,
                self.frames.len()
            )));
        }
        if self.correspondence {
            let n = self.frames[self.canonical_index].len();
            if let Some((i, f)) = self.frames.iter().enumerate().find(|(_, f)| f.len() != n) {
                return Err(Error::Invalid(format!(
                    "frame {i} has {} points but corresponding frames need {n}",
                    f.len()
                )));
            }
        }
        Ok(())
    }

    pub fn canonical(&self) -> &PointCloud {
        &self.frames[self.canonical_index]
    }

    pub fn data_mode(&self) -> DataMode {
        if self.correspondence {
            DataMode::Correspondence
        } else {
            DataMode::Unordered
        }
    }
}

pub fn frame_path(dir: &Path, pattern: &str, frame: usize) -> PathBuf {
    dir.join(expand_pattern(pattern, &[("frame", frame)]))
}

/// Frames `0..count` named by `pattern` (relative to `dir`).
pub fn load_frames(dir: &Path, pattern: &str, count: usize, correspondence: bool, canonical_index: usize) -> Result<FrameSet> {
    let mut frames = Vec::with_capacity(count);
    for t in 0..count {
        let p = frame_path(dir, pattern, t);
        if !p.exists() {
            return Err(Error::format(&p, format!("frame {t} is missing")));
        }
        frames.push(ply::load_ply(&p)?);
    }
    let set = FrameSet { frames, correspondence, canonical_index };
    set.validate()?;
    Ok(set)
}

pub fn save_frames(set: &FrameSet, dir: &Path, pattern: &str, format: PlyFormat) -> Result<Vec<PathBuf>> {
    set.validate()?;
    let mut written = Vec::with_capacity(set.frames.len());
    for (t, f) in set.frames.iter().enumerate() {
        let p = frame_path(dir, pattern, t);
        ply::save_ply(&p, f, format).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

/// One opaque point splat per cloud point, keeping its color and instance.
pub fn splats_from_cloud(cloud: &PointCloud) -> Vec<Splat> {
    (0..cloud.len())
        .map(|i| {
            let mut s = Splat::point(cloud.positions[i]);
            if let Some(c) = cloud.colors.get(i) {
                s.color = c.map(|v| v as f64 / 255.0);
            }
            s.instance_id = cloud.instance_ids.as_ref().map_or(0, |ids| ids[i]);
            s
        })
        .collect()
}

/// Everything a manifest points at, loaded and checked against each other.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub dir: PathBuf,
    pub frames: FrameSet,
    pub camera: Option<Camera>,
    pub keypoints: Option<Vec<Vec<Keypoint>>>,
    pub masks: Option<Vec<InstanceMasks>>,
    pub depth: Option<Vec<DepthImage>>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = formats::load_manifest(manifest_path)?;
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let frames = load_frames(
            &dir,
            &manifest.frames.pattern,
            manifest.frames.count,
            manifest.correspondence,
            manifest.canonical_index,
        )?;
        let camera = manifest
            .camera
            .map(|c| c.to_camera())
            .transpose()
            .map_err(|e| Error::format(manifest_path, e.to_string()))?;
        let needs_camera = |what: &str| -> Result<&Camera> {
            camera.as_ref().ok_or_else(|| Error::format(manifest_path, format!("{what} need a camera")))
        };
        let n = manifest.frames.count;

        let keypoints = match &manifest.keypoints {
            Some(rel) => {
                needs_camera("keypoints")?;
                let p = dir.join(rel);
                let k = formats::load_keypoints(&p)?;
                if k.len() != n {
                    return Err(Error::format(&p, format!("{} keypoint frames for {n} point frames", k.len())));
                }
                Some(k)
            }
            None => None,
        };

        let masks = match &manifest.masks {
            Some(m) => {
                let cam = needs_camera("masks")?;
                let mut all = Vec::with_capacity(n);
                for t in 0..n {
                    let mut bits = Vec::with_capacity(cam.width * cam.height * m.instances);
                    for i in 0..m.instances {
                        let p = dir.join(expand_pattern(&m.pattern, &[("frame", t), ("instance", i)]));
                        let (w, h, b) = crate::image::read_mask(&p)?;
                        if (w, h) != (cam.width, cam.height) {
                            return Err(Error::format(&p, format!("mask is {w}x{h}, camera is {}x{}", cam.width, cam.height)));
                        }
                        bits.extend(b);
                    }
                    all.push(InstanceMasks::from_bits(cam.width, cam.height, m.instances, bits)?);
                }
                Some(all)
            }
            None => None,
        };

        let depth = match &manifest.depth {
            Some(pattern) => {
                let mut all = Vec::with_capacity(n);
                for t in 0..n {
                    all.push(crate::image::read_depth(&dir.join(expand_pattern(pattern, &[("frame", t)])))?);
                }
                Some(all)
            }
            None => None,
        };

        Ok(Dataset { manifest, dir, frames, camera, keypoints, masks, depth })
    }

    /// Fitting targets for every frame.
    pub fn observations(&self, mask_radius_px: f64) -> Observations {
        let frames = (0..self.frames.frames.len())
            .map(|t| FrameData {
                points: self.frames.frames[t].positions.clone(),
                keypoints: self.keypoints.as_ref().map(|k| k[t].clone()),
                masks: self.masks.as_ref().map(|m| m[t].clone()),
            })
            .collect();
        Observations { frames, mode: self.frames.data_mode(), camera: self.camera.clone(), mask_radius_px }
    }
}
