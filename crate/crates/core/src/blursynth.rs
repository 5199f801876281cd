//! Random-trajectory motion-blur kernels and their application to images.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

/// Arc-length spacing of splatted samples, in pixels.
const SPLAT_SPACING: f64 = 0.25;

/// Tolerance on kernel normalisation.
pub const KERNEL_SUM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlurLevel {
    Easy,
    Hard,
    Tough,
}

/// Trajectory generation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurSpec {
    /// Odd kernel side.
    pub max_kernel: usize,
    /// Standard deviation of the per-step heading change, in radians.
    pub curvature: f64,
    /// Number of trajectory points.
    pub steps: usize,
}

impl BlurLevel {
    pub const ALL: [BlurLevel; 3] = [BlurLevel::Easy, BlurLevel::Hard, BlurLevel::Tough];

    pub fn spec(self) -> BlurSpec {
        match self {
            BlurLevel::Easy => BlurSpec { max_kernel: 9, curvature: 0.1, steps: 32 },
            BlurLevel::Hard => BlurSpec { max_kernel: 17, curvature: 0.3, steps: 64 },
            BlurLevel::Tough => BlurSpec { max_kernel: 25, curvature: 0.6, steps: 96 },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlurLevel::Easy => "easy",
            BlurLevel::Hard => "hard",
            BlurLevel::Tough => "tough",
        }
    }
}

impl fmt::Display for BlurLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlurLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(BlurLevel::Easy),
            "hard" => Ok(BlurLevel::Hard),
            "tough" => Ok(BlurLevel::Tough),
            _ => Err(Error::Config(format!("unknown blur level {s:?} (easy, hard, tough)"))),
        }
    }
}

/// A `k × k` non-negative point-spread function summing to one, stored
/// row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    k: usize,
    weights: Vec<f64>,
}

impl BlurKernel {
    pub fn new(k: usize, weights: Vec<f64>) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel side {k} must be odd")));
        }
        if weights.len() != k * k {
            return Err(Error::dim(format!("{k}x{k} kernel needs {} weights, got {}", k * k, weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("kernel weights must be finite and non-negative".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > KERNEL_SUM_TOL {
            return Err(Error::Config(format!("kernel weights sum to {s}, not 1")));
        }
        Ok(BlurKernel { k, weights })
    }

    pub fn delta(k: usize) -> Result<Self> {
        let mut w = vec![0.0; k * k];
        if k % 2 == 1 {
            w[(k / 2) * k + k / 2] = 1.0;
        }
        BlurKernel::new(k, w)
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.k + col]
    }

    /// Centre of mass `(row, col)` relative to the kernel centre.
    pub fn center_offset(&self) -> (f64, f64) {
        let c = (self.k / 2) as f64;
        let (mut r, mut q) = (0.0, 0.0);
        for i in 0..self.k {
            for j in 0..self.k {
                let w = self.at(i, j);
                r += w * i as f64;
                q += w * j as f64;
            }
        }
        (r - c, q - c)
    }
}

/// Polyline `(x, y)` of a camera-shake path, relative to the kernel centre.
pub type Trajectory = Vec<(f64, f64)>;

/// Arc-length centroid; the vertex itself for degenerate paths.
fn arc_centroid(pts: &[(f64, f64)]) -> (f64, f64) {
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for s in pts.windows(2) {
        let len = ((s[1].0 - s[0].0).powi(2) + (s[1].1 - s[0].1).powi(2)).sqrt();
        sx += len * 0.5 * (s[0].0 + s[1].0);
        sy += len * 0.5 * (s[0].1 + s[1].1);
        total += len;
    }
    if total > 0.0 {
        (sx / total, sy / total)
    } else {
        let n = pts.len() as f64;
        (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n)
    }
}

/// Random walk with Gaussian heading noise, centred on its arc-length
/// centroid and scaled so every point lies within `u · (k − 3) / 2` of the
/// centre in each axis, `u ~ U[0.5, 1]`.
pub fn sample_trajectory<G: Rng + ?Sized>(rng: &mut G, spec: &BlurSpec) -> Result<Trajectory> {
    if spec.steps == 0 || spec.max_kernel < 3 || spec.max_kernel % 2 == 0 {
        return Err(Error::Config(format!("invalid blur spec {spec:?}")));
    }
    if !(spec.curvature >= 0.0 && spec.curvature.is_finite()) {
        return Err(Error::Config(format!("curvature {} must be non-negative", spec.curvature)));
    }
    let noise = Normal::new(0.0, spec.curvature).map_err(|e| Error::Config(e.to_string()))?;
    let mut heading = rng.gen_range(0.0..2.0 * PI);
    let mut pts = Vec::with_capacity(spec.steps);
    let (mut x, mut y) = (0.0f64, 0.0f64);
    pts.push((x, y));
    for _ in 1..spec.steps {
        heading += noise.sample(rng);
        x += heading.cos();
        y += heading.sin();
        pts.push((x, y));
    }
    let u = rng.gen_range(0.5..=1.0);
    let (cx, cy) = arc_centroid(&pts);
    let radius = pts.iter().map(|p| (p.0 - cx).abs().max((p.1 - cy).abs())).fold(0.0, f64::max);
    let target = u * (spec.max_kernel - 3) as f64 / 2.0;
    let s = if radius > 0.0 { target / radius } else { 0.0 };
    Ok(pts.into_iter().map(|(px, py)| ((px - cx) * s, (py - cy) * s)).collect())
}

fn splat(w: &mut [f64], k: usize, x: f64, y: f64, mass: f64) {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (i0, j0) = (y0 as usize, x0 as usize);
    for (di, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dj, wx) in [(0, 1.0 - fx), (1, fx)] {
            let m = mass * wy * wx;
            if m != 0.0 {
                w[(i0 + di) * k + j0 + dj] += m;
            }
        }
    }
}

/// Deposits the polyline on a `k × k` grid by bilinear splatting of
/// arc-length samples; the centre pixel is `(k/2, k/2)`.
pub fn rasterize_psf(traj: &[(f64, f64)], k: usize) -> Result<BlurKernel> {
    if k % 2 == 0 || k == 0 {
        return Err(Error::Config(format!("kernel side {k} must be odd")));
    }
    if traj.is_empty() {
        return Err(Error::Geometry("empty trajectory".into()));
    }
    let c = (k / 2) as f64;
    let limit = (k - 1) as f64;
    for &(x, y) in traj {
        let (px, py) = (x + c, y + c);
        if !(px.is_finite() && py.is_finite()) || px < 0.0 || py < 0.0 || px > limit || py > limit {
            return Err(Error::Geometry(format!("trajectory point ({x:.3}, {y:.3}) leaves the {k}x{k} kernel")));
        }
    }
    let mut w = vec![0.0; (k + 1) * (k + 1)];
    let kk = k + 1;
    let mut total = 0.0;
    for s in traj.windows(2) {
        let (ax, ay) = (s[0].0 + c, s[0].1 + c);
        let (bx, by) = (s[1].0 + c, s[1].1 + c);
        let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let n = (len / SPLAT_SPACING).ceil().max(1.0) as usize;
        let m = len / n as f64;
        for t in 0..n {
            let f = (t as f64 + 0.5) / n as f64;
            splat(&mut w, kk, ax + f * (bx - ax), ay + f * (by - ay), m);
        }
        total += len;
    }
    if total == 0.0 {
        splat(&mut w, kk, traj[0].0 + c, traj[0].1 + c, 1.0);
        total = 1.0;
    }
    // Splats at the far edge carry zero weight into the spare row/column.
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        out.extend(w[i * kk..i * kk + k].iter().map(|v| v / total));
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    BlurKernel::new(k, out)
}

/// Mirror index without edge repetition, valid for any offset.
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Correlation with mirrored borders, no clamping.
pub fn apply_blur_unclamped(image: &Tensor<f32>, kern: &BlurKernel) -> Result<Tensor<f32>> {
    let (h, w, c) = image.dims3()?;
    let k = kern.size();
    let r = (k / 2) as isize;
    let d = image.data();
    let mut out = vec![0.0f32; h * w * c];
    let taps: Vec<(isize, isize, f64)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter_map(|(a, b)| {
            let wt = kern.at(a, b);
            (wt != 0.0).then_some((a as isize - r, b as isize - r, wt))
        })
        .collect();
    let mut acc = vec![0.0f64; c];
    for i in 0..h {
        for j in 0..w {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for &(da, db, wt) in &taps {
                let si = reflect(i as isize + da, h);
                let sj = reflect(j as isize + db, w);
                let base = (si * w + sj) * c;
                for (ch, a) in acc.iter_mut().enumerate() {
                    *a += wt * f64::from(d[base + ch]);
                }
            }
            let o = (i * w + j) * c;
            for (ch, a) in acc.iter().enumerate() {
                out[o + ch] = *a as f32;
            }
        }
    }
    Tensor::new(image.shape(), out)
}

/// Correlation with mirrored borders, clamped to `[0, 1]`.
pub fn apply_blur(image: &Tensor<f32>, kern: &BlurKernel) -> Result<Tensor<f32>> {
    let mut out = apply_blur_unclamped(image, kern)?;
    out.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(out)
}

pub fn random_kernel<G: Rng + ?Sized>(rng: &mut G, spec: &BlurSpec) -> Result<BlurKernel> {
    let traj = sample_trajectory(rng, spec)?;
    rasterize_psf(&traj, spec.max_kernel)
}

/// Blurs `sharp` with a freshly sampled kernel of the given level.
pub fn synth_pair<G: Rng + ?Sized>(sharp: &Tensor<f32>, level: BlurLevel, rng: &mut G) -> Result<(Tensor<f32>, BlurKernel)> {
    let kern = random_kernel(rng, &level.spec())?;
    Ok((apply_blur(sharp, &kern)?, kern))
}

/// Mean absolute 4-neighbour Laplacian over interior pixels of channel 0.
pub fn mean_abs_laplacian(image: &Tensor<f32>) -> Result<f64> {
    let (h, w, c) = image.dims3()?;
    if h < 3 || w < 3 {
        return Err(Error::dim(format!("Laplacian needs at least 3x3, got {h}x{w}")));
    }
    let v = |i: usize, j: usize| f64::from(image.data()[(i * w + j) * c]);
    let mut s = 0.0;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            s += (v(i - 1, j) + v(i + 1, j) + v(i, j - 1) + v(i, j + 1) - 4.0 * v(i, j)).abs();
        }
    }
    Ok(s / ((h - 2) * (w - 2)) as f64)
}
