//! Procedural corner scenes with exactly known keypoints.
//!
//! The canvas is tiled into 16-pixel tiles, each covering 2×2 detection
//! cells of 8 pixels. Every tile holds one axis-aligned rectangle whose four
//! corner pixels fall in four different cells, so each cell contains exactly
//! one keypoint. Corners are at least 5 px apart, beyond the reference
//! detector's suppression radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainingSample;
use crate::blursynth::{synth_pair, BlurLevel};
use crate::error::{Error, Result};
use crate::model::Keypoint;
use crate::tensorgrad::Tensor;

pub const SCENE_TILE: usize = 16;
/// Offsets within a tile of the near and far rectangle sides.
const NEAR: (usize, usize) = (2, 4);
const FAR: (usize, usize) = (11, 13);
const MIN_CONTRAST: f32 = 0.25;

/// One rectangle per tile. Returns the image and the four corner pixels of
/// every rectangle (the outermost pixels it covers).
pub fn corner_scene<G: Rng + ?Sized>(h: usize, w: usize, rng: &mut G) -> Result<(Tensor<f32>, Vec<Keypoint>)> {
    if h < SCENE_TILE || w < SCENE_TILE {
        return Err(Error::Config(format!("corner scene needs at least {SCENE_TILE}x{SCENE_TILE}, got {h}x{w}")));
    }
    let background: f32 = rng.gen_range(0.1..0.9);
    let mut data = vec![background; h * w];
    let mut corners = Vec::new();
    for ty in 0..h / SCENE_TILE {
        for tx in 0..w / SCENE_TILE {
            let (ox, oy) = (tx * SCENE_TILE, ty * SCENE_TILE);
            let x0 = ox + rng.gen_range(NEAR.0..=NEAR.1);
            let x1 = ox + rng.gen_range(FAR.0..=FAR.1);
            let y0 = oy + rng.gen_range(NEAR.0..=NEAR.1);
            let y1 = oy + rng.gen_range(FAR.0..=FAR.1);
            let level = loop {
                let v: f32 = rng.gen_range(0.0..1.0);
                if (v - background).abs() >= MIN_CONTRAST {
                    break v;
                }
            };
            for y in y0..=y1 {
                data[y * w + x0..=y * w + x1].fill(level);
            }
            let (x0, x1, y0, y1) = (x0 as f64, x1 as f64, y0 as f64, y1 as f64);
            corners.extend([(x0, y0), (x1, y0), (x0, y1), (x1, y1)].map(|(x, y)| Keypoint::new(x, y, 1.0)));
        }
    }
    Ok((Tensor::new(&[h, w, 1], data)?, corners))
}

/// `n` corner scenes, each paired with an independent blur at `level`.
/// Sample `i` depends only on `(seed, i)`.
pub fn corner_dataset(n: usize, size: usize, level: BlurLevel, seed: u64) -> Result<Vec<TrainingSample>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (sharp, corners) = corner_scene(size, size, &mut rng)?;
            let (blurred, _) = synth_pair(&sharp, level, &mut rng)?;
            TrainingSample::new(sharp, blurred, corners)
        })
        .collect()
}
