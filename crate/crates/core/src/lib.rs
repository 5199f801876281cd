//! Blur-aware keypoint detection with an all-MLP network.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensorgrad`]: dense tensors, reverse-mode differentiation, Adam.
//! - [`blocks`]: channel MLP, multi-axis gated MLP, squeeze-excitation,
//!   residual MLP attention, spatial partitions and depth-to-space.
//! - [`model`]: encoder + channel-softmax detection head, keypoint extraction.
//! - [`supervision`]: reference keypoints, heatmap targets, augmentation and
//!   the training loop.
//! - [`blursynth`]: random-trajectory motion-blur kernels.
//! - [`evalkit`]: homography geometry and the repeatability protocol.
//! - [`gradsuite`]: finite-difference checks of every differentiable block.
//! - [`io`]: netpbm images, keypoint CSV, homography text, model files.

pub mod blocks;
pub mod blursynth;
pub mod error;
pub mod evalkit;
pub mod gradsuite;
pub mod io;
pub mod model;
pub mod supervision;
pub mod tensorgrad;

pub use error::{Error, Result};
