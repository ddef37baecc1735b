//! A bound scene: canonical splats, their motion graph, per-frame graph
//! parameters and the cached weight painting.

use alloc::vec::Vec;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::graph::{MotionGraph, MotionSequence, Theta};
use crate::optimize::LossConfig;
use crate::skinning::{default_gammas, deform_positions, deform_splats, PaintMode, Splat, WeightPainting};

/// How a scene's weights are painted when binding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PaintOptions {
    /// Per-link kernel radii; derived from the link spacing when absent.
    pub gammas: Option<Vec<f64>>,
    pub mode: PaintMode,
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    /// Splats at the canonical frame.
    pub splats: Vec<Splat>,
    pub graph: MotionGraph,
    pub motion: MotionSequence,
    pub painting: WeightPainting,
    pub instance_count: usize,
}

impl Scene {
    /// Bind `splats` to `graph` at `canonical` and propagate the canonical
    /// parameters to every frame. Without explicit `gammas` the kernel radius
    /// comes from the graph's link spacing.
    pub fn bind(
        splats: Vec<Splat>,
        graph: MotionGraph,
        canonical: Theta,
        frames: usize,
        canonical_index: usize,
        paint: PaintOptions,
    ) -> Result<Self> {
        let PaintOptions { gammas, mode, top_k } = paint;
        graph.topology.check_theta(&canonical)?;
        let joints = graph.joint_positions(&canonical)?;
        let gammas = match gammas {
            Some(g) => g,
            None => default_gammas(&graph.topology, &joints)?,
        };
        for s in &splats {
            s.validate()?;
        }
        let positions: Vec<Vec3> = splats.iter().map(Splat::position).collect();
        let painting = WeightPainting::paint(&graph, &canonical, &positions, gammas, mode, top_k)?;
        let motion = MotionSequence::propagate(canonical, frames, canonical_index)?;
        let instance_count = splats.iter().map(|s| s.instance_id as usize + 1).max().unwrap_or(1);
        Ok(Scene {
            splats,
            graph,
            motion,
            painting,
            instance_count,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.motion.is_empty() || self.motion.canonical_index >= self.motion.len() {
            return Err(Error::invalid("canonical index outside the frame range"));
        }
        for th in &self.motion.frames {
            self.graph.topology.check_theta(th)?;
        }
        if self.painting.len() != self.splats.len() {
            return Err(Error::mismatch("painted splats", self.splats.len(), self.painting.len()));
        }
        if self.painting.link_count() != self.graph.topology.link_count() {
            return Err(Error::Topology("painting was made for a different graph".into()));
        }
        if let Some(s) = self.splats.iter().find(|s| s.instance_id as usize >= self.instance_count) {
            return Err(Error::invalid(alloc::format!("instance id {} out of range", s.instance_id)));
        }
        Ok(())
    }

    pub fn canonical(&self) -> &Theta {
        self.motion.canonical()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.splats.iter().map(Splat::position).collect()
    }

    /// Splats deformed to an arbitrary set of graph parameters.
    pub fn deform_to(&self, theta: &Theta) -> Result<Vec<Splat>> {
        deform_splats(&self.graph, self.canonical(), theta, &self.splats, &self.painting)
    }

    pub fn deform_frame(&self, frame: usize) -> Result<Vec<Splat>> {
        let th = self.motion.frames.get(frame).ok_or_else(|| Error::invalid("frame out of range"))?;
        self.deform_to(th)
    }

    pub fn positions_at(&self, theta: &Theta) -> Result<Vec<Vec3>> {
        deform_positions(&self.graph, self.canonical(), theta, &self.positions(), &self.painting)
    }

    /// Repaint at the current canonical parameters and the given radii.
    pub fn repaint(&mut self, gammas: Vec<f64>) -> Result<()> {
        self.painting = WeightPainting::paint(
            &self.graph,
            self.motion.canonical(),
            &self.positions(),
            gammas,
            self.painting.mode,
            self.painting.top_k,
        )?;
        Ok(())
    }
}

/// Everything needed to resume or render a fitted scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneCheckpoint {
    pub scene: Scene,
    pub loss: LossConfig,
    /// Total objective at the start, after every epoch, and finally at the
    /// returned parameters.
    pub history: Vec<f64>,
    pub camera: Option<Camera>,
    /// Canonical joints before fitting, the anchor of the canonical
    /// regularizer.
    pub initial_joints: Vec<Vec3>,
}

impl SceneCheckpoint {
    /// A checkpoint of an unfitted scene.
    pub fn unfitted(scene: Scene, loss: LossConfig, camera: Option<Camera>) -> Result<Self> {
        let initial_joints = scene.graph.joint_positions(scene.canonical())?;
        Ok(SceneCheckpoint {
            scene,
            loss,
            history: Vec::new(),
            camera,
            initial_joints,
        })
    }
}
