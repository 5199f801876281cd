use crate::blursynth::reflect;
use crate::error::{Error, Result};
use crate::model::{sort_keypoints, Keypoint};
use crate::tensorgrad::Tensor;

/// Pre-smoothing applied before gradients are taken.
pub const PRESMOOTH_SIGMA: f64 = 1.0;
/// Chebyshev radius of the suppression window.
pub const NMS_RADIUS: usize = 4;
/// Candidates must exceed this fraction of the strongest response.
pub const QUALITY_LEVEL: f64 = 0.01;
/// Absolute floor on the minimum eigenvalue, for images in `[0, 1]`.
pub const MIN_RESPONSE: f64 = 1e-7;

/// Separable Gaussian smoothing of channel 0 with mirrored borders, in f64.
pub fn gaussian_smooth(img: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * img[i * w + reflect(j as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect(i as isize + k as isize - r, h) * w + j])
                .sum();
        }
    }
    out
}

/// Minimum eigenvalue of the gradient structure tensor summed over a 3×3
/// window, after Gaussian pre-smoothing. Returned row-major `h × w`.
pub fn min_eigen_response(image: &Tensor<f32>) -> Result<Vec<f64>> {
    let (h, w, c) = image.dims3()?;
    if c != 1 {
        return Err(Error::dim(format!("corner measure needs a single channel, got {c}")));
    }
    let raw: Vec<f64> = image.data().iter().map(|&v| f64::from(v)).collect();
    let s = gaussian_smooth(&raw, h, w, PRESMOOTH_SIGMA);
    let at = |i: isize, j: isize| s[reflect(i, h) * w + reflect(j, w)];
    let mut gxx = vec![0.0; h * w];
    let mut gyy = vec![0.0; h * w];
    let mut gxy = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let gx = 0.5 * (at(i, j + 1) - at(i, j - 1));
            let gy = 0.5 * (at(i + 1, j) - at(i - 1, j));
            let k = i as usize * w + j as usize;
            gxx[k] = gx * gx;
            gyy[k] = gy * gy;
            gxy[k] = gx * gy;
        }
    }
    let win = |m: &[f64], i: isize, j: isize| -> f64 {
        let mut acc = 0.0;
        for di in -1..=1 {
            for dj in -1..=1 {
                acc += m[reflect(i + di, h) * w + reflect(j + dj, w)];
            }
        }
        acc
    };
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let (a, b, cc) = (win(&gxx, i, j), win(&gxy, i, j), win(&gyy, i, j));
            let half_tr = 0.5 * (a + cc);
            let disc = (0.25 * (a - cc) * (a - cc) + b * b).sqrt();
            out[i as usize * w + j as usize] = (half_tr - disc).max(0.0);
        }
    }
    Ok(out)
}

/// Built-in reference corners: minimum-eigenvalue measure, greedy
/// suppression within [`NMS_RADIUS`], strongest `max_k` kept. Scores are
/// responses divided by the image maximum.
pub fn detect_reference_keypoints(image: &Tensor<f32>, max_k: usize) -> Result<Vec<Keypoint>> {
    let (h, w, _) = image.dims3()?;
    if max_k == 0 {
        return Ok(Vec::new());
    }
    let resp = min_eigen_response(image)?;
    let peak = resp.iter().cloned().fold(0.0, f64::max);
    if peak <= MIN_RESPONSE {
        return Ok(Vec::new());
    }
    let floor = (QUALITY_LEVEL * peak).max(MIN_RESPONSE);
    let mut cand: Vec<Keypoint> = resp
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > floor)
        .map(|(k, &v)| Keypoint::new((k % w) as f64, (k / w) as f64, v / peak))
        .collect();
    sort_keypoints(&mut cand);
    let r = NMS_RADIUS as isize;
    let mut taken = vec![false; h * w];
    let mut out = Vec::new();
    for kp in cand {
        let (x, y) = (kp.x as isize, kp.y as isize);
        let blocked = (-r..=r).any(|di| {
            (-r..=r).any(|dj| {
                let (i, j) = (y + di, x + dj);
                i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w && taken[i as usize * w + j as usize]
            })
        });
        if !blocked {
            taken[y as usize * w + x as usize] = true;
            out.push(kp);
            if out.len() == max_k {
                break;
            }
        }
    }
    Ok(out)
}
