//! Encoder, detection head, and keypoint extraction.

mod config;
mod network;

pub use config::ModelConfig;
pub use network::{DetectionHead, Network, Stage};

use crate::blocks::{Block, ParamStore};
use crate::error::{Error, Result};
use crate::tensorgrad::{Graph, Real, Tensor, Var};

/// Default post-softmax detection threshold, just above the uniform floor
/// `1/64` of the default head.
pub const DEFAULT_THRESHOLD: f64 = 0.02;

/// A detected interest point. `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, score: f64) -> Self {
        Keypoint { x, y, score }
    }
}

/// How `encode` treats extents that are not multiples of
/// [`ModelConfig::size_multiple`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Padding {
    /// Mirror-pad bottom and right edges.
    #[default]
    Reflect,
    /// Reject non-divisible inputs.
    Off,
}

/// Architecture plus parameter values.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    network: Network,
    params: ParamStore<f32>,
}

pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    let network = Network::new(config)?;
    let params = ParamStore::from_specs(&network.specs(), seed)?;
    Ok(Model { config: config.clone(), network, params })
}

impl Model {
    /// Assembles a model from stored parameters, checking every name and shape.
    pub fn from_params(config: &ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        let network = Network::new(config)?;
        params.validate(&network.specs())?;
        Ok(Model { config: config.clone(), network, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.total_numel()
    }

    fn check_input(&self, image: &Tensor<f32>) -> Result<(usize, usize)> {
        let (h, w, c) = image.dims3()?;
        if c != self.config.in_channels {
            return Err(Error::dim(format!(
                "model expects {} input channels, image has {c}",
                self.config.in_channels
            )));
        }
        image.check_finite("input image")?;
        Ok((h, w))
    }

    fn prepare(&self, image: &Tensor<f32>, padding: Padding) -> Result<Tensor<f32>> {
        let (h, w) = self.check_input(image)?;
        let m = self.config.size_multiple();
        let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        if (hp, wp) == (h, w) {
            return Ok(image.clone());
        }
        match padding {
            Padding::Reflect => pad_reflect(image, hp, wp),
            Padding::Off => Err(Error::dim(format!("{h}x{w} input is not a multiple of {m} and padding is off"))),
        }
    }

    /// Encoder features `[H'/2^N, W'/2^N, C_last]` of the (possibly padded)
    /// input.
    pub fn encode(&self, image: &Tensor<f32>, padding: Padding) -> Result<Tensor<f32>> {
        let x = self.prepare(image, padding)?;
        let g = Graph::inference();
        let p = self.params.bind(&g, false);
        let xv = g.constant(x);
        Ok(self.network.encode(&g, &p, &xv)?.to_tensor())
    }

    /// Response on the padded canvas, before cropping.
    pub fn padded_response(&self, image: &Tensor<f32>) -> Result<PaddedResponse> {
        let (h, w) = self.check_input(image)?;
        let x = self.prepare(image, Padding::Reflect)?;
        let g = Graph::inference();
        let p = self.params.bind(&g, false);
        let xv = g.constant(x);
        let map = self.network.forward(&g, &p, &xv)?.to_tensor();
        Ok(PaddedResponse { map, height: h, width: w, cell: self.config.cell() })
    }

    /// Full-resolution response map `[H, W, 1]`.
    pub fn score_map(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.padded_response(image)?.cropped()
    }

    pub fn detect(&self, image: &Tensor<f32>, max_k: usize, threshold: f64) -> Result<Vec<Keypoint>> {
        self.padded_response(image)?.detect(max_k, threshold)
    }

    /// Differentiable forward for training: the image must already satisfy
    /// the divisibility contract.
    pub fn forward_var<R: Real>(
        &self,
        g: &Graph<R>,
        p: &crate::blocks::BoundParams<R>,
        x: &Var<R>,
    ) -> Result<Var<R>> {
        self.network.forward(g, p, x)
    }
}

/// A response map computed on a padded canvas together with the extents of
/// the original image.
#[derive(Clone, Debug)]
pub struct PaddedResponse {
    pub map: Tensor<f32>,
    pub height: usize,
    pub width: usize,
    pub cell: usize,
}

impl PaddedResponse {
    pub fn cropped(&self) -> Result<Tensor<f32>> {
        crop(&self.map, self.height, self.width)
    }

    /// One candidate per cell (first maximal pixel in row-major order), kept
    /// if above `threshold` and the cell lies fully inside the image.
    pub fn detect(&self, max_k: usize, threshold: f64) -> Result<Vec<Keypoint>> {
        detect_from_response(&self.map, self.height, self.width, self.cell, max_k, threshold)
    }
}

/// Keypoints from a response map whose extents are multiples of `cell`.
/// Cells extending past `height × width` are suppressed.
pub fn detect_from_response(
    map: &Tensor<f32>,
    height: usize,
    width: usize,
    cell: usize,
    max_k: usize,
    threshold: f64,
) -> Result<Vec<Keypoint>> {
    if max_k == 0 {
        return Err(Error::Contract("max_k must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Contract(format!("threshold {threshold} outside [0, 1)")));
    }
    let (hp, wp, c) = map.dims3()?;
    if c != 1 || cell == 0 || hp % cell != 0 || wp % cell != 0 || height > hp || width > wp {
        return Err(Error::dim(format!(
            "response {:?} incompatible with cell {cell} and image {height}x{width}",
            map.shape()
        )));
    }
    let d = map.data();
    let mut out = Vec::new();
    for u in 0..height / cell {
        for v in 0..width / cell {
            let (mut best, mut bi, mut bj) = (f32::NEG_INFINITY, 0, 0);
            for di in 0..cell {
                let row = (u * cell + di) * wp + v * cell;
                for dj in 0..cell {
                    let s = d[row + dj];
                    if s > best {
                        best = s;
                        bi = u * cell + di;
                        bj = v * cell + dj;
                    }
                }
            }
            if f64::from(best) > threshold {
                out.push(Keypoint::new(bj as f64, bi as f64, f64::from(best)));
            }
        }
    }
    sort_keypoints(&mut out);
    out.truncate(max_k);
    Ok(out)
}

/// Descending score, then ascending `y`, then ascending `x`.
pub fn sort_keypoints(kps: &mut [Keypoint]) {
    kps.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
}

fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m >= n {
        period - m
    } else {
        m
    }
}

/// Mirror-pads `[H, W, C]` on the bottom and right to `[hp, wp, C]`,
/// excluding the edge pixel from the mirror.
pub fn pad_reflect<R: Real>(x: &Tensor<R>, hp: usize, wp: usize) -> Result<Tensor<R>> {
    let (h, w, c) = x.dims3()?;
    if hp < h || wp < w {
        return Err(Error::dim(format!("cannot pad {h}x{w} down to {hp}x{wp}")));
    }
    let d = x.data();
    let mut out = Vec::with_capacity(hp * wp * c);
    for i in 0..hp {
        let si = reflect_index(i, h);
        for j in 0..wp {
            let sj = reflect_index(j, w);
            let base = (si * w + sj) * c;
            out.extend_from_slice(&d[base..base + c]);
        }
    }
    Tensor::new(&[hp, wp, c], out)
}

/// Top-left `h × w` window of `[H, W, C]`.
pub fn crop<R: Real>(x: &Tensor<R>, h: usize, w: usize) -> Result<Tensor<R>> {
    let (hx, wx, c) = x.dims3()?;
    if h > hx || w > wx || h == 0 || w == 0 {
        return Err(Error::dim(format!("cannot crop {hx}x{wx} to {h}x{w}")));
    }
    let d = x.data();
    let mut out = Vec::with_capacity(h * w * c);
    for i in 0..h {
        out.extend_from_slice(&d[i * wx * c..(i * wx + w) * c]);
    }
    Tensor::new(&[h, w, c], out)
}
