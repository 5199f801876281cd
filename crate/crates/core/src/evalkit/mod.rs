//! Homography geometry and the repeatability protocol.
//!
//! Each keypoint is modelled as an axis-aligned square of half-side `rho`.
//! Reference squares are carried into the target frame by the homography,
//! their side scaled by the local Jacobian, and compared against target
//! squares by intersection-over-union.

mod homography;

pub use homography::{jacobian_scale, warp_image, warp_point, Homography, DEGENERATE_EPS};

use crate::error::{Error, Result};
use crate::model::{sort_keypoints, Keypoint};

pub const DEFAULT_RHO: f64 = 4.0;
pub const DEFAULT_EPS: f64 = 0.4;
pub const DEFAULT_TOP_K: usize = 1000;

/// Protocol parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalParams {
    pub top_k: usize,
    /// Overlap errors must be strictly below this.
    pub eps: f64,
    pub rho: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { top_k: DEFAULT_TOP_K, eps: DEFAULT_EPS, rho: DEFAULT_RHO }
    }
}

/// `(height, width)` of an image.
pub type Dims = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// `(reference index, target index, overlap error)` into the filtered
    /// lists, in selection order.
    pub matches: Vec<(usize, usize, f64)>,
    pub n_ref: usize,
    pub n_tgt: usize,
    pub repeatability: f64,
}

fn square_iou_error(c1: (f64, f64), half1: f64, c2: (f64, f64), half2: f64) -> f64 {
    let (l1, r1, t1, b1) = (c1.0 - half1, c1.0 + half1, c1.1 - half1, c1.1 + half1);
    let (l2, r2, t2, b2) = (c2.0 - half2, c2.0 + half2, c2.1 - half2, c2.1 + half2);
    let ix = (r1.min(r2) - l1.max(l2)).max(0.0);
    let iy = (b1.min(b2) - t1.max(t2)).max(0.0);
    let inter = ix * iy;
    let union = (r1 - l1) * (b1 - t1) + (r2 - l2) * (b2 - t2) - inter;
    if union <= 0.0 {
        return 1.0;
    }
    ((union - inter) / union).clamp(0.0, 1.0)
}

/// `1 − IoU` between the warped reference square and the target square.
pub fn region_overlap_error(kp_ref: (f64, f64), kp_tgt: (f64, f64), h: &Homography, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("region half-side {rho} must be positive")));
    }
    let c = warp_point(h, kp_ref)?;
    let s = jacobian_scale(h, kp_ref)?;
    Ok(square_iou_error(c, rho * s, kp_tgt, rho))
}

fn inside(p: (f64, f64), dims: Dims, rho: f64) -> bool {
    let (h, w) = dims;
    p.0 >= rho && p.1 >= rho && p.0 < w as f64 - rho && p.1 < h as f64 - rho
}

/// Keeps reference keypoints whose image under `h` lies in the target frame
/// inset by `rho`, and target keypoints whose image under `h⁻¹` lies in the
/// reference frame inset by `rho`. Points mapping to infinity are dropped.
pub fn shared_region_filter(
    kps_ref: &[Keypoint],
    kps_tgt: &[Keypoint],
    h: &Homography,
    dims_ref: Dims,
    dims_tgt: Dims,
    rho: f64,
) -> Result<(Vec<Keypoint>, Vec<Keypoint>)> {
    let inv = h.inverse()?;
    let keep = |kps: &[Keypoint], m: &Homography, dims: Dims| -> Vec<Keypoint> {
        kps.iter()
            .filter(|k| warp_point(m, (k.x, k.y)).map(|p| inside(p, dims, rho)).unwrap_or(false))
            .copied()
            .collect()
    };
    Ok((keep(kps_ref, h, dims_tgt), keep(kps_tgt, &inv, dims_ref)))
}

/// Greedy one-to-one selection over `errors[ref][tgt]`: candidates below
/// `eps` taken in ascending error order (ties by reference then target
/// index), skipping indices already used.
pub fn match_one_to_one(errors: &[Vec<f64>], eps: f64) -> Vec<(usize, usize, f64)> {
    let mut cand: Vec<(usize, usize, f64)> = errors
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &e)| (i, j, e)))
        .filter(|&(_, _, e)| e < eps)
        .collect();
    cand.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let n_tgt = errors.iter().map(Vec::len).max().unwrap_or(0);
    let mut used_r = vec![false; errors.len()];
    let mut used_t = vec![false; n_tgt];
    let mut out = Vec::new();
    for (i, j, e) in cand {
        if !used_r[i] && !used_t[j] {
            used_r[i] = true;
            used_t[j] = true;
            out.push((i, j, e));
        }
    }
    out
}

/// Top-k by score on each side, then shared-region filtering. The indices
/// of [`MatchResult::matches`] refer to these lists.
pub fn evaluated_keypoints(
    kps_ref: &[Keypoint],
    kps_tgt: &[Keypoint],
    h: &Homography,
    dims_ref: Dims,
    dims_tgt: Dims,
    params: &EvalParams,
) -> Result<(Vec<Keypoint>, Vec<Keypoint>)> {
    let top = |kps: &[Keypoint]| {
        let mut v = kps.to_vec();
        sort_keypoints(&mut v);
        v.truncate(params.top_k);
        v
    };
    shared_region_filter(&top(kps_ref), &top(kps_tgt), h, dims_ref, dims_tgt, params.rho)
}

/// [`evaluated_keypoints`], pairwise overlap errors, greedy matching;
/// `|matches| / min(n_ref, n_tgt)`, zero when a side is empty.
pub fn repeatability(
    kps_ref: &[Keypoint],
    kps_tgt: &[Keypoint],
    h: &Homography,
    dims_ref: Dims,
    dims_tgt: Dims,
    params: &EvalParams,
) -> Result<MatchResult> {
    let (r, t) = evaluated_keypoints(kps_ref, kps_tgt, h, dims_ref, dims_tgt, params)?;
    let errors = r
        .iter()
        .map(|a| t.iter().map(|b| region_overlap_error((a.x, a.y), (b.x, b.y), h, params.rho)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let matches = match_one_to_one(&errors, params.eps);
    let denom = r.len().min(t.len());
    let repeatability = if denom == 0 { 0.0 } else { matches.len() as f64 / denom as f64 };
    Ok(MatchResult { matches, n_ref: r.len(), n_tgt: t.len(), repeatability })
}

#[cfg(test)]
mod tests;
