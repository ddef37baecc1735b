//! Losses, the differentiation contract and the per-frame fitting loop.

mod adam;
mod fit;
mod gradcheck;
mod losses;
mod objective;

pub use adam::Adam;
pub use fit::{check_scene_gradients, fit_sequence, fit_sequence_from, FitOptions, STRICT_TOLERANCE};
pub use gradcheck::{check_gradients, relative_error, GradientProvider, GradientReport, ScaledGradient};
pub use losses::{canonical_reg, data_loss, keypoint_reg, mask_loss, DataLoss, DataMode, Keypoint, KeypointLoss};
pub use objective::{FrameData, FrameTerms, Observations, ParamLayout, SceneObjective};

use crate::error::{Error, Result};

/// Weights of the four loss terms and which static quantities are learned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_data: f64,
    pub lambda_canonical: f64,
    pub lambda_keypoint: f64,
    pub lambda_mask: f64,
    /// Learn the per-link kernel radii.
    pub learn_gamma: bool,
    /// Learn the link lengths of a kinematic tree.
    pub learn_phi: bool,
    /// Learn the canonical-frame graph parameters as well.
    pub learn_canonical: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_data: 1.0,
            lambda_canonical: 0.1,
            lambda_keypoint: 0.1,
            lambda_mask: 0.1,
            learn_gamma: true,
            learn_phi: true,
            learn_canonical: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda_data, self.lambda_canonical, self.lambda_keypoint, self.lambda_mask];
        if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("loss weights must be finite and nonnegative"));
        }
        if l.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("at least one loss weight must be positive"));
        }
        Ok(())
    }
}
