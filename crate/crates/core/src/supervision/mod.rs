//! Supervision targets, augmentation and the training loop.

mod augment;
mod heatmap;
mod reference;
mod synthetic;
mod train;

pub use augment::{augment, sample_geometry, AugmentConfig};
pub use heatmap::{mse_loss, render_heatmap, DEFAULT_SIGMA};
pub use reference::{
    detect_reference_keypoints, gaussian_smooth, min_eigen_response, MIN_RESPONSE, NMS_RADIUS, PRESMOOTH_SIGMA,
    QUALITY_LEVEL,
};
pub use synthetic::{corner_dataset, corner_scene, SCENE_TILE};
pub use train::{dataset_loss, lr_schedule, stream_rng, train, StepInfo, TrainConfig, TrainLog};

use crate::error::{Error, Result};
use crate::model::Keypoint;
use crate::tensorgrad::Tensor;

/// A sharp/blurred image pair sharing keypoints defined on the sharp image.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub sharp: Tensor<f32>,
    pub blurred: Tensor<f32>,
    pub keypoints: Vec<Keypoint>,
}

impl TrainingSample {
    pub fn new(sharp: Tensor<f32>, blurred: Tensor<f32>, keypoints: Vec<Keypoint>) -> Result<Self> {
        let (h, w, _) = sharp.dims3()?;
        if sharp.shape() != blurred.shape() {
            return Err(Error::dim(format!(
                "sharp {:?} and blurred {:?} differ in shape",
                sharp.shape(),
                blurred.shape()
            )));
        }
        if let Some(k) = keypoints
            .iter()
            .find(|k| !(k.x >= 0.0 && k.y >= 0.0 && k.x < w as f64 && k.y < h as f64))
        {
            return Err(Error::Geometry(format!("keypoint ({}, {}) outside {h}x{w} image", k.x, k.y)));
        }
        Ok(TrainingSample { sharp, blurred, keypoints })
    }
}
