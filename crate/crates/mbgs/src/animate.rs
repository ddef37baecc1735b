//! Keyframe animation export shared by the `animate` command and the edit
//! server: uniformly sampled frames rendered to images, plus the track.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use mbgs_core::camera::Camera;
use mbgs_core::keyframe::{interpolate_keyframes, Keyframe, KeyframeTrack};
use mbgs_core::render::{render_points, Image};
use mbgs_core::scene::Scene;
use mbgs_core::skinning::{deform_splats, Splat};

use crate::error::{Error, Result};
use crate::formats::{to_json_bytes, KeyframeFile};
use crate::image::{encode_image, ImageFormat};

pub const DEFAULT_RADIUS_PX: f64 = 1.5;
pub const TRACK_FILE: &str = "track.json";

pub fn frame_file_name(index: usize, format: ImageFormat) -> String {
    format!("frame_{index:04}.{}", format.extension())
}

/// The full splat set at a keyframe. Link lengths stored with the key
/// replace the scene's when they differ.
pub fn deform_keyframe(scene: &Scene, key: &Keyframe) -> Result<Vec<Splat>> {
    let graph = if key.link_lengths.is_empty() || key.link_lengths == scene.graph.link_lengths {
        Cow::Borrowed(&scene.graph)
    } else {
        let mut g = scene.graph.clone();
        g.link_lengths = key.link_lengths.clone();
        Cow::Owned(g)
    };
    Ok(deform_splats(&graph, scene.canonical(), &key.theta, &scene.splats, &scene.painting)?)
}

pub fn render_animation(
    scene: &Scene,
    camera: &Camera,
    track: &KeyframeTrack,
    frame_count: usize,
    radius_px: f64,
) -> Result<Vec<Image>> {
    let times = track.uniform_times(frame_count)?;
    times
        .iter()
        .map(|t| {
            let key = interpolate_keyframes(track, *t)?;
            Ok(render_points(&deform_keyframe(scene, &key)?, camera, radius_px))
        })
        .collect()
}

/// Every output file name with its contents, in write order.
pub fn animation_files(
    scene: &Scene,
    camera: &Camera,
    track: &KeyframeTrack,
    frame_count: usize,
    radius_px: f64,
    format: ImageFormat,
) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<(String, Vec<u8>)> = render_animation(scene, camera, track, frame_count, radius_px)?
        .iter()
        .enumerate()
        .map(|(i, img)| (frame_file_name(i, format), encode_image(img, format)))
        .collect();
    files.push((TRACK_FILE.to_string(), to_json_bytes(&KeyframeFile::new(track))));
    Ok(files)
}

/// Render and write the animation into `out_dir`. Nothing is written
/// unless every frame rendered.
pub fn export_animation(
    scene: &Scene,
    camera: &Camera,
    track: &KeyframeTrack,
    frame_count: usize,
    radius_px: f64,
    format: ImageFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let files = animation_files(scene, camera, track, frame_count, radius_px, format)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let p = out_dir.join(name);
        crate::fsio::write_bytes(&p, &bytes).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
