//! Keyframed animation of graph parameters.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{GraphTopology, Theta, TreeTheta};

/// A snapshot of the graph parameters at one time. `link_lengths` is empty
/// for deformable graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub time: f64,
    pub theta: Theta,
    pub link_lengths: Vec<f64>,
}

/// Keyframes in strictly increasing time order, all for one topology.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyframeTrack {
    keys: Vec<Keyframe>,
}

impl KeyframeTrack {
    pub fn new() -> Self {
        KeyframeTrack::default()
    }

    /// Build a track, checking ordering and that every snapshot fits
    /// `topology`.
    pub fn from_keys(topology: &GraphTopology, keys: Vec<Keyframe>) -> Result<Self> {
        let mut track = KeyframeTrack::new();
        for k in keys {
            track.push(topology, k)?;
        }
        Ok(track)
    }

    /// Append a keyframe later than every existing one.
    pub fn push(&mut self, topology: &GraphTopology, key: Keyframe) -> Result<()> {
        if !key.time.is_finite() {
            return Err(Error::invalid("keyframe time must be finite"));
        }
        if let Some(last) = self.keys.last() {
            if key.time <= last.time {
                return Err(Error::invalid(alloc::format!(
                    "keyframe time {} is not after the last keyframe at {}",
                    key.time,
                    last.time
                )));
            }
        }
        topology.check_theta(&key.theta)?;
        if topology.is_tree() {
            topology.check_phi(&key.link_lengths)?;
        } else if !key.link_lengths.is_empty() {
            return Err(Error::invalid("deformable keyframes carry no link lengths"));
        }
        self.keys.push(key);
        Ok(())
    }

    pub fn keys(&self) -> &[Keyframe] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Time span `(first, last)`, if any keys exist.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.keys.first()?.time, self.keys.last()?.time))
    }

    /// `count` times spread uniformly over the span, both ends included.
    pub fn uniform_times(&self, count: usize) -> Result<Vec<f64>> {
        if self.keys.len() < 2 {
            return Err(Error::invalid("sampling a track needs at least two keyframes"));
        }
        if count < 2 {
            return Err(Error::invalid("sampling a track needs at least two frames"));
        }
        let (a, b) = self.span().unwrap_or_default();
        Ok((0..count)
            .map(|i| {
                if i + 1 == count {
                    b
                } else {
                    a + (b - a) * (i as f64 / (count - 1) as f64)
                }
            })
            .collect())
    }
}

/// Parameters at time `t`: rotations by slerp between the bracketing
/// keyframes, positions, translations and lengths linearly. Exact at knots.
pub fn interpolate_keyframes(track: &KeyframeTrack, t: f64) -> Result<Keyframe> {
    let (a, b) = track.span().ok_or_else(|| Error::invalid("empty keyframe track"))?;
    if !(t >= a && t <= b) {
        return Err(Error::invalid(alloc::format!("time {t} outside the keyframe range [{a}, {b}]")));
    }
    let keys = track.keys();
    let hi = keys.partition_point(|k| k.time < t);
    if keys[hi].time == t {
        return Ok(keys[hi].clone());
    }
    let (k0, k1) = (&keys[hi - 1], &keys[hi]);
    let u = (t - k0.time) / (k1.time - k0.time);
    let theta = match (&k0.theta, &k1.theta) {
        (Theta::Tree(p), Theta::Tree(q)) => {
            let mut root = p.root;
            root.rotation = p.root.rotation.slerp(&q.root.rotation, u).normalized();
            root.translation = p.root.translation.lerp(&q.root.translation, u);
            Theta::Tree(TreeTheta {
                root,
                rotations: p
                    .rotations
                    .iter()
                    .zip(&q.rotations)
                    .map(|(x, y)| x.slerp(y, u).normalized())
                    .collect(),
            })
        }
        (Theta::Deformable(p), Theta::Deformable(q)) => {
            Theta::Deformable(p.iter().zip(q).map(|(x, y)| x.lerp(y, u)).collect())
        }
        _ => return Err(Error::Topology("keyframes mix graph kinds".into())),
    };
    let link_lengths = k0
        .link_lengths
        .iter()
        .zip(&k1.link_lengths)
        .map(|(x, y)| x + (y - x) * u)
        .collect();
    Ok(Keyframe {
        time: t,
        theta,
        link_lengths,
    })
}
