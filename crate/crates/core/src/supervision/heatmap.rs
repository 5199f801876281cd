use crate::error::{Error, Result};
use crate::model::Keypoint;
use crate::tensorgrad::Tensor;

pub const DEFAULT_SIGMA: f64 = 2.0;

/// Target response: a unit-peak Gaussian on the rounded pixel of each
/// keypoint, truncated beyond `3σ`, combined by maximum.
pub fn render_heatmap(kps: &[Keypoint], h: usize, w: usize, sigma: f64) -> Result<Tensor<f32>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("heatmap sigma {sigma} must be positive")));
    }
    let mut out = vec![0.0f32; h * w];
    let r = (3.0 * sigma).floor() as isize;
    let cut = 9.0 * sigma * sigma;
    for kp in kps {
        let (cx, cy) = (kp.x.round() as isize, kp.y.round() as isize);
        for di in -r..=r {
            for dj in -r..=r {
                let (i, j) = (cy + di, cx + dj);
                if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
                    continue;
                }
                let d2 = (di * di + dj * dj) as f64;
                if d2 > cut {
                    continue;
                }
                let v = (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                let o = &mut out[i as usize * w + j as usize];
                *o = o.max(v);
            }
        }
    }
    Tensor::new(&[h, w, 1], out)
}

/// Mean squared difference.
pub fn mse_loss(r: &Tensor<f32>, target: &Tensor<f32>) -> Result<f64> {
    if r.shape() != target.shape() {
        return Err(Error::dim(format!("loss shapes {:?} and {:?} differ", r.shape(), target.shape())));
    }
    let s: f64 = r
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| {
            let d = f64::from(*a) - f64::from(*b);
            d * d
        })
        .sum();
    Ok(s / r.numel() as f64)
}
