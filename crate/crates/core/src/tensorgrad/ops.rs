//! Differentiable operations. Every map is `[..., C]` with channels
//! fastest; "rows" are all leading positions.

use super::graph::{GradSink, Node};
use super::real::matmul;
use super::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) enum Op<R: Real> {
    Leaf,
    Dense { x: Var<R>, w: Var<R>, b: Var<R> },
    Gelu { x: Var<R> },
    Sigmoid { x: Var<R> },
    LayerNorm { x: Var<R>, gamma: Var<R>, beta: Var<R>, xhat: Vec<R>, rstd: Vec<R> },
    Softmax { x: Var<R> },
    MaxPool { x: Var<R>, argmax: Vec<u32> },
    Add { a: Var<R>, b: Var<R> },
    Mul { a: Var<R>, b: Var<R> },
    ScaleChannels { x: Var<R>, s: Var<R> },
    MeanRows { x: Var<R> },
    SliceChannels { x: Var<R>, start: usize },
    ConcatChannels { a: Var<R>, b: Var<R> },
    GatherRows { x: Var<R>, index: Vec<u32>, row: usize },
    SpatialDense { u: Var<R>, w: Var<R>, b: Var<R> },
    Mse { r: Var<R>, target: Vec<R> },
    Sum { x: Var<R> },
    Scale { x: Var<R>, k: R },
}

fn rows_of(shape: &[usize]) -> usize {
    shape[..shape.len() - 1].iter().product()
}

fn with_last(shape: &[usize], c: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    *s.last_mut().expect("rank >= 1") = c;
    s
}

fn same_shape<R: Real>(what: &str, a: &Var<R>, b: &Var<R>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[inline]
fn gelu_fwd<R: Real>(x: R) -> R {
    let half = R::lit(0.5);
    let u = R::lit(GELU_K) * (x + R::lit(GELU_A) * x * x * x);
    half * x * (R::one() + u.fast_tanh())
}

#[inline]
fn gelu_grad<R: Real>(x: R) -> R {
    let half = R::lit(0.5);
    let k = R::lit(GELU_K);
    let a = R::lit(GELU_A);
    let t = (k * (x + a * x * x * x)).fast_tanh();
    half * (R::one() + t) + half * x * (R::one() - t * t) * k * (R::one() + R::lit(3.0) * a * x * x)
}

/// Scalar GELU (tanh approximation), exposed for reference checks.
pub fn gelu_scalar(x: f64) -> f64 {
    gelu_fwd(x)
}

impl<R: Real> Graph<R> {
    /// Per-row affine map `x·W + b` over the channel axis.
    pub fn dense_channels(&self, x: &Var<R>, w: &Var<R>, b: &Var<R>) -> Result<Var<R>> {
        let cin = x.channels();
        let (wi, wo) = match w.shape() {
            [i, o] => (*i, *o),
            s => return Err(Error::dim(format!("dense weight must be [Cin, Cout], got {s:?}"))),
        };
        if wi != cin {
            return Err(Error::dim(format!(
                "dense: input has {cin} channels but weight expects {wi}"
            )));
        }
        if b.shape() != [wo] {
            return Err(Error::dim(format!("dense bias must be [{wo}], got {:?}", b.shape())));
        }
        let rows = rows_of(x.shape());
        let mut out = vec![R::zero(); rows * wo];
        for row in out.chunks_exact_mut(wo) {
            row.copy_from_slice(b.value());
        }
        matmul(rows, cin, wo, x.value(), false, w.value(), false, &mut out, true);
        Ok(self.push(with_last(x.shape(), wo), out, &[x, w, b], || Op::Dense {
            x: x.clone(),
            w: w.clone(),
            b: b.clone(),
        }))
    }

    pub fn gelu(&self, x: &Var<R>) -> Var<R> {
        let out = x.value().iter().map(|&v| gelu_fwd(v)).collect();
        self.push(x.shape().to_vec(), out, &[x], || Op::Gelu { x: x.clone() })
    }

    pub fn sigmoid(&self, x: &Var<R>) -> Var<R> {
        let out = x.value().iter().map(|&v| R::one() / (R::one() + (-v).exp())).collect();
        self.push(x.shape().to_vec(), out, &[x], || Op::Sigmoid { x: x.clone() })
    }

    /// Normalizes each row over channels, then applies `gamma`/`beta`.
    pub fn layer_norm(&self, x: &Var<R>, gamma: &Var<R>, beta: &Var<R>, eps: f64) -> Result<Var<R>> {
        let c = x.channels();
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::dim(format!(
                "layer_norm over {c} channels got gamma {:?}, beta {:?}",
                gamma.shape(),
                beta.shape()
            )));
        }
        let rows = rows_of(x.shape());
        let n = R::lit(c as f64);
        let eps = R::lit(eps);
        let mut xhat = vec![R::zero(); rows * c];
        let mut rstd = vec![R::zero(); rows];
        let mut out = vec![R::zero(); rows * c];
        let (g, bt) = (gamma.value(), beta.value());
        for r in 0..rows {
            let xs = &x.value()[r * c..(r + 1) * c];
            let mean = xs.iter().copied().sum::<R>() / n;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() / n;
            let rs = R::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for k in 0..c {
                let h = (xs[k] - mean) * rs;
                xhat[r * c + k] = h;
                out[r * c + k] = h * g[k] + bt[k];
            }
        }
        let tracked = self.is_recording() && [x, gamma, beta].iter().any(|v| v.requires_grad());
        let (xhat, rstd) = if tracked { (xhat, rstd) } else { (Vec::new(), Vec::new()) };
        Ok(self.push(x.shape().to_vec(), out, &[x, gamma, beta], || Op::LayerNorm {
            x: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            rstd,
        }))
    }

    /// Softmax over the channel axis of every row, max-subtracted.
    pub fn softmax_channels(&self, x: &Var<R>) -> Var<R> {
        let c = x.channels();
        let mut out = x.value().to_vec();
        for row in out.chunks_exact_mut(c) {
            let m = row.iter().copied().fold(R::neg_infinity(), R::max);
            // Normalising in f64 keeps each row's sum within a few ulps of 1.
            let mut s = 0.0f64;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += v.as_f64();
            }
            for v in row.iter_mut() {
                *v = R::lit(v.as_f64() / s);
            }
        }
        self.push(x.shape().to_vec(), out, &[x], || Op::Softmax { x: x.clone() })
    }

    /// 2×2 non-overlapping max pooling of an `[H, W, C]` map. Ties resolve
    /// to the first element in row-major scan order.
    pub fn maxpool2(&self, x: &Var<R>) -> Result<Var<R>> {
        let (h, w, c) = match x.shape() {
            [h, w, c] => (*h, *w, *c),
            s => return Err(Error::dim(format!("maxpool2 needs [H, W, C], got {s:?}"))),
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dim(format!("maxpool2 needs even extents, got {h}x{w}")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xv = x.value();
        let mut out = vec![R::zero(); ho * wo * c];
        let mut argmax = vec![0u32; ho * wo * c];
        for i in 0..ho {
            for j in 0..wo {
                let o = (i * wo + j) * c;
                let cand = [
                    ((2 * i) * w + 2 * j) * c,
                    ((2 * i) * w + 2 * j + 1) * c,
                    ((2 * i + 1) * w + 2 * j) * c,
                    ((2 * i + 1) * w + 2 * j + 1) * c,
                ];
                for k in 0..c {
                    let mut best = cand[0] + k;
                    for &base in &cand[1..] {
                        if xv[base + k] > xv[best] {
                            best = base + k;
                        }
                    }
                    out[o + k] = xv[best];
                    argmax[o + k] = best as u32;
                }
            }
        }
        Ok(self.push(vec![ho, wo, c], out, &[x], || Op::MaxPool { x: x.clone(), argmax }))
    }

    pub fn add(&self, a: &Var<R>, b: &Var<R>) -> Result<Var<R>> {
        same_shape("add", a, b)?;
        let out = a.value().iter().zip(b.value()).map(|(&p, &q)| p + q).collect();
        Ok(self.push(a.shape().to_vec(), out, &[a, b], || Op::Add { a: a.clone(), b: b.clone() }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, a: &Var<R>, b: &Var<R>) -> Result<Var<R>> {
        same_shape("mul", a, b)?;
        let out = a.value().iter().zip(b.value()).map(|(&p, &q)| p * q).collect();
        Ok(self.push(a.shape().to_vec(), out, &[a, b], || Op::Mul { a: a.clone(), b: b.clone() }))
    }

    /// `out[.., c] = x[.., c] · s[c]`.
    pub fn scale_channels(&self, x: &Var<R>, s: &Var<R>) -> Result<Var<R>> {
        let c = x.channels();
        if s.shape() != [c] {
            return Err(Error::dim(format!("channel scale must be [{c}], got {:?}", s.shape())));
        }
        let sv = s.value();
        let mut out = x.value().to_vec();
        for row in out.chunks_exact_mut(c) {
            row.iter_mut().zip(sv).for_each(|(v, &k)| *v *= k);
        }
        Ok(self.push(x.shape().to_vec(), out, &[x, s], || Op::ScaleChannels {
            x: x.clone(),
            s: s.clone(),
        }))
    }

    /// Mean over all rows, per channel: `[..., C] → [C]`.
    pub fn mean_rows(&self, x: &Var<R>) -> Var<R> {
        let c = x.channels();
        let rows = rows_of(x.shape());
        let mut out = vec![R::zero(); c];
        for row in x.value().chunks_exact(c) {
            out.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
        }
        let inv = R::one() / R::lit(rows as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        self.push(vec![c], out, &[x], || Op::MeanRows { x: x.clone() })
    }

    /// Channels `start..start + width` of every row.
    pub fn slice_channels(&self, x: &Var<R>, start: usize, width: usize) -> Result<Var<R>> {
        let c = x.channels();
        if width == 0 || start + width > c {
            return Err(Error::dim(format!(
                "channel slice {start}..{} out of range for {c} channels",
                start + width
            )));
        }
        let out: Vec<R> = x
            .value()
            .chunks_exact(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        Ok(self.push(with_last(x.shape(), width), out, &[x], || Op::SliceChannels {
            x: x.clone(),
            start,
        }))
    }

    pub fn concat_channels(&self, a: &Var<R>, b: &Var<R>) -> Result<Var<R>> {
        let (ca, cb) = (a.channels(), b.channels());
        if a.shape()[..a.shape().len() - 1] != b.shape()[..b.shape().len() - 1] {
            return Err(Error::dim(format!(
                "concat: leading shapes {:?} and {:?} differ",
                a.shape(),
                b.shape()
            )));
        }
        let rows = rows_of(a.shape());
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&a.value()[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&b.value()[r * cb..(r + 1) * cb]);
        }
        Ok(self.push(with_last(a.shape(), ca + cb), out, &[a, b], || Op::ConcatChannels {
            a: a.clone(),
            b: b.clone(),
        }))
    }

    /// Row gather: output row `r` is input row `index[r]`, where a row is
    /// `row` contiguous scalars. The backward pass scatter-adds.
    pub fn gather_rows(
        &self,
        x: &Var<R>,
        index: Vec<u32>,
        row: usize,
        out_shape: Vec<usize>,
    ) -> Result<Var<R>> {
        let n_in = x.numel() / row;
        if row == 0 || x.numel() % row != 0 || index.iter().any(|&i| i as usize >= n_in) {
            return Err(Error::dim("gather index out of range".to_string()));
        }
        if index.len() * row != out_shape.iter().product::<usize>() {
            return Err(Error::dim(format!(
                "gather of {} rows of {row} cannot fill shape {out_shape:?}",
                index.len()
            )));
        }
        let xv = x.value();
        let mut out = Vec::with_capacity(index.len() * row);
        for &i in &index {
            let i = i as usize;
            out.extend_from_slice(&xv[i * row..(i + 1) * row]);
        }
        Ok(self.push(out_shape, out, &[x], || Op::GatherRows { x: x.clone(), index, row }))
    }

    /// Dense map along the middle axis of `[G, L, C]`:
    /// `out[g, l, c] = Σ_m W[l, m]·u[g, m, c] + b[l]`.
    pub fn spatial_dense(&self, u: &Var<R>, w: &Var<R>, b: &Var<R>) -> Result<Var<R>> {
        let (groups, len, c) = match u.shape() {
            [g, l, c] => (*g, *l, *c),
            s => return Err(Error::dim(format!("spatial dense needs [G, L, C], got {s:?}"))),
        };
        if w.shape() != [len, len] || b.shape() != [len] {
            return Err(Error::dim(format!(
                "spatial dense over length {len} got weight {:?}, bias {:?}",
                w.shape(),
                b.shape()
            )));
        }
        let mut out = vec![R::zero(); groups * len * c];
        let block = len * c;
        for (g, o) in out.chunks_exact_mut(block).enumerate() {
            for (l, row) in o.chunks_exact_mut(c).enumerate() {
                row.iter_mut().for_each(|v| *v = b.value()[l]);
            }
            matmul(len, len, c, w.value(), false, &u.value()[g * block..(g + 1) * block], false, o, true);
        }
        Ok(self.push(u.shape().to_vec(), out, &[u, w, b], || Op::SpatialDense {
            u: u.clone(),
            w: w.clone(),
            b: b.clone(),
        }))
    }

    /// Mean squared difference against a constant target.
    pub fn mse(&self, r: &Var<R>, target: &Tensor<R>) -> Result<Var<R>> {
        if r.shape() != target.shape() {
            return Err(Error::dim(format!(
                "mse: prediction {:?} vs target {:?}",
                r.shape(),
                target.shape()
            )));
        }
        let n = R::lit(r.numel() as f64);
        let s: R = r.value().iter().zip(target.data()).map(|(&a, &t)| (a - t) * (a - t)).sum();
        Ok(self.push(vec![1], vec![s / n], &[r], || Op::Mse {
            r: r.clone(),
            target: target.data().to_vec(),
        }))
    }

    pub fn sum(&self, x: &Var<R>) -> Var<R> {
        let s = x.value().iter().copied().sum();
        self.push(vec![1], vec![s], &[x], || Op::Sum { x: x.clone() })
    }

    pub fn scale(&self, x: &Var<R>, k: R) -> Var<R> {
        let out = x.value().iter().map(|&v| v * k).collect();
        self.push(x.shape().to_vec(), out, &[x], || Op::Scale { x: x.clone(), k })
    }
}

impl<R: Real> Op<R> {
    pub(crate) fn backward(&self, node: &Node<R>, gy: &[R], sink: &mut GradSink<'_, R>) {
        match self {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let cin = x.channels();
                let cout = node.shape[node.shape.len() - 1];
                let rows = rows_of(x.shape());
                if sink.wants(x) {
                    let mut gx = vec![R::zero(); rows * cin];
                    matmul(rows, cout, cin, gy, false, w.value(), true, &mut gx, false);
                    sink.add(x, gx);
                }
                if sink.wants(w) {
                    let mut gw = vec![R::zero(); cin * cout];
                    matmul(cin, rows, cout, x.value(), true, gy, false, &mut gw, false);
                    sink.add(w, gw);
                }
                if sink.wants(b) {
                    let mut gb = vec![R::zero(); cout];
                    for row in gy.chunks_exact(cout) {
                        gb.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                    }
                    sink.add(b, gb);
                }
            }
            Op::Gelu { x } => {
                let gx = x.value().iter().zip(gy).map(|(&v, &g)| g * gelu_grad(v)).collect();
                sink.add(x, gx);
            }
            Op::Sigmoid { x } => {
                let gx = node
                    .value
                    .iter()
                    .zip(gy)
                    .map(|(&y, &g)| g * y * (R::one() - y))
                    .collect();
                sink.add(x, gx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let c = x.channels();
                let gv = gamma.value();
                if sink.wants(x) {
                    let n = R::lit(c as f64);
                    let mut gx = vec![R::zero(); x.numel()];
                    let mut dh = vec![R::zero(); c];
                    for (r, out) in gx.chunks_exact_mut(c).enumerate() {
                        let g_row = &gy[r * c..(r + 1) * c];
                        let h_row = &xhat[r * c..(r + 1) * c];
                        let mut s1 = R::zero();
                        let mut s2 = R::zero();
                        for k in 0..c {
                            dh[k] = g_row[k] * gv[k];
                            s1 += dh[k];
                            s2 += dh[k] * h_row[k];
                        }
                        let (m1, m2) = (s1 / n, s2 / n);
                        for k in 0..c {
                            out[k] = rstd[r] * (dh[k] - m1 - h_row[k] * m2);
                        }
                    }
                    sink.add(x, gx);
                }
                if sink.wants(gamma) {
                    let mut gg = vec![R::zero(); c];
                    for (g_row, h_row) in gy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for k in 0..c {
                            gg[k] += g_row[k] * h_row[k];
                        }
                    }
                    sink.add(gamma, gg);
                }
                if sink.wants(beta) {
                    let mut gb = vec![R::zero(); c];
                    for g_row in gy.chunks_exact(c) {
                        gb.iter_mut().zip(g_row).for_each(|(a, &g)| *a += g);
                    }
                    sink.add(beta, gb);
                }
            }
            Op::Softmax { x } => {
                let c = x.channels();
                let mut gx = vec![R::zero(); x.numel()];
                for ((out, y), g) in gx
                    .chunks_exact_mut(c)
                    .zip(node.value.chunks_exact(c))
                    .zip(gy.chunks_exact(c))
                {
                    let dot: R = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    for k in 0..c {
                        out[k] = y[k] * (g[k] - dot);
                    }
                }
                sink.add(x, gx);
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![R::zero(); x.numel()];
                for (&src, &g) in argmax.iter().zip(gy) {
                    gx[src as usize] += g;
                }
                sink.add(x, gx);
            }
            Op::Add { a, b } => {
                if sink.wants(a) {
                    sink.add(a, gy.to_vec());
                }
                if sink.wants(b) {
                    sink.add(b, gy.to_vec());
                }
            }
            Op::Mul { a, b } => {
                if sink.wants(a) {
                    sink.add(a, gy.iter().zip(b.value()).map(|(&g, &v)| g * v).collect());
                }
                if sink.wants(b) {
                    sink.add(b, gy.iter().zip(a.value()).map(|(&g, &v)| g * v).collect());
                }
            }
            Op::ScaleChannels { x, s } => {
                let c = x.channels();
                if sink.wants(x) {
                    let mut gx = gy.to_vec();
                    for row in gx.chunks_exact_mut(c) {
                        row.iter_mut().zip(s.value()).for_each(|(v, &k)| *v *= k);
                    }
                    sink.add(x, gx);
                }
                if sink.wants(s) {
                    let mut gs = vec![R::zero(); c];
                    for (g_row, x_row) in gy.chunks_exact(c).zip(x.value().chunks_exact(c)) {
                        for k in 0..c {
                            gs[k] += g_row[k] * x_row[k];
                        }
                    }
                    sink.add(s, gs);
                }
            }
            Op::MeanRows { x } => {
                let c = x.channels();
                let inv = R::one() / R::lit(rows_of(x.shape()) as f64);
                let per: Vec<R> = gy.iter().map(|&g| g * inv).collect();
                let mut gx = Vec::with_capacity(x.numel());
                for _ in 0..rows_of(x.shape()) {
                    gx.extend_from_slice(&per[..c]);
                }
                sink.add(x, gx);
            }
            Op::SliceChannels { x, start } => {
                let c = x.channels();
                let width = node.shape[node.shape.len() - 1];
                let mut gx = vec![R::zero(); x.numel()];
                for (out, g) in gx.chunks_exact_mut(c).zip(gy.chunks_exact(width)) {
                    out[*start..start + width].copy_from_slice(g);
                }
                sink.add(x, gx);
            }
            Op::ConcatChannels { a, b } => {
                let (ca, cb) = (a.channels(), b.channels());
                if sink.wants(a) {
                    sink.add(a, gy.chunks_exact(ca + cb).flat_map(|r| r[..ca].iter().copied()).collect());
                }
                if sink.wants(b) {
                    sink.add(b, gy.chunks_exact(ca + cb).flat_map(|r| r[ca..].iter().copied()).collect());
                }
            }
            Op::GatherRows { x, index, row } => {
                let mut gx = vec![R::zero(); x.numel()];
                for (r, &src) in index.iter().enumerate() {
                    let src = src as usize;
                    let dst = &mut gx[src * row..(src + 1) * row];
                    dst.iter_mut().zip(&gy[r * row..(r + 1) * row]).for_each(|(a, &g)| *a += g);
                }
                sink.add(x, gx);
            }
            Op::SpatialDense { u, w, b } => {
                let (groups, len, c) = (u.shape()[0], u.shape()[1], u.shape()[2]);
                let block = len * c;
                if sink.wants(u) {
                    let mut gu = vec![R::zero(); u.numel()];
                    for (g, out) in gu.chunks_exact_mut(block).enumerate() {
                        matmul(len, len, c, w.value(), true, &gy[g * block..(g + 1) * block], false, out, false);
                    }
                    sink.add(u, gu);
                }
                if sink.wants(w) {
                    let mut gw = vec![R::zero(); len * len];
                    for g in 0..groups {
                        let sl = g * block..(g + 1) * block;
                        matmul(len, c, len, &gy[sl.clone()], false, &u.value()[sl], true, &mut gw, true);
                    }
                    sink.add(w, gw);
                }
                if sink.wants(b) {
                    let mut gb = vec![R::zero(); len];
                    for grp in gy.chunks_exact(block) {
                        for (l, row) in grp.chunks_exact(c).enumerate() {
                            gb[l] += row.iter().copied().sum::<R>();
                        }
                    }
                    sink.add(b, gb);
                }
            }
            Op::Mse { r, target } => {
                let k = gy[0] * R::lit(2.0) / R::lit(r.numel() as f64);
                let gr = r.value().iter().zip(target).map(|(&a, &t)| k * (a - t)).collect();
                sink.add(r, gr);
            }
            Op::Sum { x } => sink.add(x, vec![gy[0]; x.numel()]),
            Op::Scale { x, k } => sink.add(x, gy.iter().map(|&g| g * *k).collect()),
        }
    }
}
