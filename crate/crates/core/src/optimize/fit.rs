use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_gradients;
use super::objective::{Observations, SceneObjective};
use super::{Adam, LossConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{Scene, SceneCheckpoint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Optimizer steps; each step visits one frame.
    pub iters: usize,
    /// Initial learning rate, decayed linearly to 1% of itself.
    pub lr: f64,
    pub seed: u64,
    /// Run a gradient check before fitting and refuse to start on failure.
    pub strict: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            iters: 2000,
            lr: 1e-2,
            seed: 0,
            strict: false,
        }
    }
}

/// Largest relative error tolerated by the strict-mode gradient check.
pub const STRICT_TOLERANCE: f64 = 1e-4;

/// Fit every frame's graph parameters (and optionally the kernel radii,
/// link lengths and canonical parameters) to the observations.
///
/// Frames are visited in a fresh random order each epoch. The returned
/// checkpoint holds the parameters with the lowest total objective seen at
/// an epoch boundary; its history lists the total at the start, after each
/// epoch, and at the returned parameters.
pub fn fit_sequence(
    scene: &Scene,
    observations: &Observations,
    cfg: &LossConfig,
    options: &FitOptions,
) -> Result<SceneCheckpoint> {
    let initial_joints = scene.graph.joint_positions(scene.canonical())?;
    fit_sequence_from(scene, observations, cfg, options, &initial_joints)
}

/// Same as [`fit_sequence`] with an explicit anchor for the canonical
/// regularizer.
pub fn fit_sequence_from(
    scene: &Scene,
    observations: &Observations,
    cfg: &LossConfig,
    options: &FitOptions,
    initial_joints: &[Vec3],
) -> Result<SceneCheckpoint> {
    if scene.motion.len() < 2 {
        return Err(Error::invalid("fitting needs at least two frames"));
    }
    if !(options.lr > 0.0 && options.lr.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let objective = SceneObjective::new(scene, observations, cfg, initial_joints)?;
    let mut x = objective.initial_params().to_vec();

    if options.strict {
        let free = objective.gather(&x);
        let report = check_gradients(&objective, &free, 1e-6)?;
        if report.max_relative_error > STRICT_TOLERANCE {
            return Err(Error::GradientCheck(report.max_relative_error));
        }
    }

    let frames = scene.motion.len();
    let finite = |v: f64, iteration: usize, frame: Option<usize>| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Optimization(match frame {
                Some(t) => format!("loss became {v} at iteration {iteration} on frame {t}"),
                None => format!("total loss became {v} after iteration {iteration}"),
            }))
        }
    };
    let start = finite(objective.total(&x)?, 0, None)?;
    let mut history = vec![start];
    let mut best = (start, x.clone());

    let mut adam = Adam::new(x.len(), options.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..frames).collect();
    let mut grad = vec![0.0; x.len()];
    let mut iteration = 0;
    while iteration < options.iters {
        order.shuffle(&mut rng);
        for &t in &order {
            if iteration == options.iters {
                break;
            }
            let idx = objective.frame_indices(t);
            for &i in &idx {
                grad[i] = 0.0;
            }
            let terms = objective.frame_gradient(&x, t, &mut grad)?;
            finite(terms.total, iteration, Some(t)).map_err(|e| match e {
                Error::Optimization(m) => Error::Optimization(format!(
                    "{m} (data {}, canonical {}, keypoint {}, mask {})",
                    terms.data, terms.canonical, terms.keypoint, terms.mask
                )),
                other => other,
            })?;
            if let Some(&i) = idx.iter().find(|&&i| !grad[i].is_finite()) {
                return Err(Error::Optimization(format!(
                    "non-finite gradient for parameter {i} at iteration {iteration} on frame {t}"
                )));
            }
            let g: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
            adam.lr = options.lr * (1.0 - 0.99 * iteration as f64 / options.iters as f64);
            adam.step_sparse(&mut x, &idx, &g);
            objective.project(&mut x);
            iteration += 1;
        }
        let total = finite(objective.total(&x)?, iteration, None)?;
        history.push(total);
        if total < best.0 {
            best = (total, x.clone());
        }
    }
    history.push(best.0);
    let fitted = objective.to_scene(&best.1)?;
    Ok(SceneCheckpoint {
        scene: fitted,
        loss: *cfg,
        history,
        camera: observations.camera,
        initial_joints: initial_joints.to_vec(),
    })
}

/// Gradient check of the full objective at the scene's current parameters.
pub fn check_scene_gradients(
    scene: &Scene,
    observations: &Observations,
    cfg: &LossConfig,
    h: f64,
) -> Result<super::GradientReport> {
    let initial_joints = scene.graph.joint_positions(scene.canonical())?;
    let objective = SceneObjective::new(scene, observations, cfg, &initial_joints)?;
    check_gradients(&objective, &objective.gather(objective.initial_params()), h)
}
