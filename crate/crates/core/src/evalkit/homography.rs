use std::fmt;

use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

/// Smallest admissible `|det M|` and projective denominator.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Projective map of reference pixel coordinates `(x, y)` to target
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl Homography {
    /// Validates finiteness and `|det| > 1e-12`, then scales so that
    /// `M[2][2] = 1` when it is nonzero.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography".into()));
        }
        let mut m = m;
        let z = m[2][2];
        if z != 0.0 {
            m.iter_mut().flatten().for_each(|v| *v /= z);
        }
        let d = det3(&m);
        if d.abs() <= DEGENERATE_EPS {
            return Err(Error::Geometry(format!("singular homography (det {d:e})")));
        }
        Ok(Homography { m })
    }

    pub fn identity() -> Self {
        Homography { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]] }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let d = self.det();
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
            [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
            [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
        ];
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = adj[i][j] / d;
            }
        }
        Homography::new(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Homography::new(r)
    }

    /// Exact map of four source points onto four destination points.
    pub fn from_correspondences(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Result<Self> {
        let mut a = [[0.0f64; 9]; 8];
        for (k, (&(x, y), &(u, v))) in src.iter().zip(dst).enumerate() {
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        for col in 0..8 {
            let piv = (col..8)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .expect("non-empty range");
            if a[piv][col].abs() < 1e-12 {
                return Err(Error::Geometry("degenerate point correspondences".into()));
            }
            a.swap(col, piv);
            for r in 0..8 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..9 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let h: Vec<f64> = (0..8).map(|i| a[i][8] / a[i][i]).collect();
        Homography::new([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    }

    fn denom(&self, x: f64, y: f64) -> Result<f64> {
        let w = self.m[2][0] * x + self.m[2][1] * y + self.m[2][2];
        if w.abs() <= DEGENERATE_EPS || !w.is_finite() {
            return Err(Error::Geometry(format!("({x}, {y}) maps to infinity")));
        }
        Ok(w)
    }
}

impl fmt::Display for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.m {
            writeln!(f, "{:e} {:e} {:e}", row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

pub fn warp_point(h: &Homography, p: (f64, f64)) -> Result<(f64, f64)> {
    let (x, y) = p;
    let w = h.denom(x, y)?;
    let m = &h.m;
    Ok(((m[0][0] * x + m[0][1] * y + m[0][2]) / w, (m[1][0] * x + m[1][1] * y + m[1][2]) / w))
}

/// `sqrt(|det J|)` of the map at `p`, the local linear scale factor.
pub fn jacobian_scale(h: &Homography, p: (f64, f64)) -> Result<f64> {
    let (x, y) = p;
    let w = h.denom(x, y)?;
    let m = &h.m;
    let u = m[0][0] * x + m[0][1] * y + m[0][2];
    let v = m[1][0] * x + m[1][1] * y + m[1][2];
    let j00 = (m[0][0] * w - u * m[2][0]) / (w * w);
    let j01 = (m[0][1] * w - u * m[2][1]) / (w * w);
    let j10 = (m[1][0] * w - v * m[2][0]) / (w * w);
    let j11 = (m[1][1] * w - v * m[2][1]) / (w * w);
    Ok((j00 * j11 - j01 * j10).abs().sqrt())
}

/// Resamples `src` into an `out_h × out_w` target frame, `target = H(src)`,
/// by inverse mapping with bilinear interpolation. Pixels mapping outside
/// the source take `fill`.
pub fn warp_image(src: &Tensor<f32>, h: &Homography, out_h: usize, out_w: usize, fill: f32) -> Result<Tensor<f32>> {
    let (sh, sw, c) = src.dims3()?;
    let inv = h.inverse()?;
    let d = src.data();
    let mut out = vec![fill; out_h * out_w * c];
    for i in 0..out_h {
        for j in 0..out_w {
            let Ok((x, y)) = warp_point(&inv, (j as f64, i as f64)) else {
                continue;
            };
            if !(x >= 0.0 && y >= 0.0 && x <= (sw - 1) as f64 && y <= (sh - 1) as f64) {
                continue;
            }
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            for ch in 0..c {
                let at = |r: usize, q: usize| f64::from(d[(r * sw + q) * c + ch]);
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out[(i * out_w + j) * c + ch] = (top * (1.0 - fy) + bot * fy) as f32;
            }
        }
    }
    Tensor::new(&[out_h, out_w, c], out)
}
