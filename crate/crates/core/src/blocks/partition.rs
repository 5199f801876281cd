//! Index maps between `[H, W, C]` maps and `[groups, L, C]` partitions, and
//! the depth-to-space rearrangement used by the detection head.

use crate::error::{Error, Result};
use crate::tensorgrad::{Graph, Real, Tensor, Var};

fn check_divisible(h: usize, w: usize, s: usize, what: &str) -> Result<()> {
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::dim(format!("{what} size {s} must divide {h}x{w}")));
    }
    Ok(())
}

/// Source pixel (row-major flat) of every `(group, position)` slot of the
/// local partition: non-overlapping `b×b` windows.
pub fn block_partition_index(h: usize, w: usize, b: usize) -> Result<Vec<u32>> {
    check_divisible(h, w, b, "block")?;
    let gw = w / b;
    let groups = (h / b) * gw;
    let mut idx = Vec::with_capacity(h * w);
    for grp in 0..groups {
        let (bi, bj) = (grp / gw, grp % gw);
        for pos in 0..b * b {
            let i = bi * b + pos / b;
            let j = bj * b + pos % b;
            idx.push((i * w + j) as u32);
        }
    }
    Ok(idx)
}

/// Source pixel of every slot of the global partition: a `g×g` grid of
/// cells, each group collecting the pixels sharing one intra-cell offset.
pub fn grid_partition_index(h: usize, w: usize, g: usize) -> Result<Vec<u32>> {
    check_divisible(h, w, g, "grid")?;
    let (ch, cw) = (h / g, w / g);
    let mut idx = Vec::with_capacity(h * w);
    for grp in 0..ch * cw {
        let (a, c) = (grp / cw, grp % cw);
        for pos in 0..g * g {
            let i = (pos / g) * ch + a;
            let j = (pos % g) * cw + c;
            idx.push((i * w + j) as u32);
        }
    }
    Ok(idx)
}

/// Inverse of a permutation given as a gather index.
pub fn invert(index: &[u32]) -> Vec<u32> {
    let mut inv = vec![0u32; index.len()];
    for (slot, &src) in index.iter().enumerate() {
        inv[src as usize] = slot as u32;
    }
    inv
}

fn gather_tensor<R: Real>(x: &Tensor<R>, index: &[u32], row: usize, shape: &[usize]) -> Result<Tensor<R>> {
    let mut out = Vec::with_capacity(x.numel());
    for &i in index {
        let i = i as usize;
        out.extend_from_slice(&x.data()[i * row..(i + 1) * row]);
    }
    Tensor::new(shape, out)
}

/// Partition kind along which a gated spatial MLP mixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Contiguous `b×b` windows.
    Block(usize),
    /// Dilated `g×g` grid.
    Grid(usize),
}

impl Axis {
    pub fn size(self) -> usize {
        match self {
            Axis::Block(s) | Axis::Grid(s) => s,
        }
    }

    pub fn index(self, h: usize, w: usize) -> Result<Vec<u32>> {
        match self {
            Axis::Block(b) => block_partition_index(h, w, b),
            Axis::Grid(g) => grid_partition_index(h, w, g),
        }
    }

    /// `[H, W, C] → [(H/s)(W/s), s², C]`.
    pub fn partition<R: Real>(self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let (h, w, c) = x.dims3()?;
        let s = self.size();
        let idx = self.index(h, w)?;
        gather_tensor(x, &idx, c, &[h * w / (s * s), s * s, c])
    }

    /// Exact inverse of [`Axis::partition`] for an `h×w` map.
    pub fn unpartition<R: Real>(self, p: &Tensor<R>, h: usize, w: usize) -> Result<Tensor<R>> {
        let c = p.channels();
        if p.numel() != h * w * c {
            return Err(Error::dim(format!("partition of {:?} does not fit {h}x{w}", p.shape())));
        }
        let inv = invert(&self.index(h, w)?);
        gather_tensor(p, &inv, c, &[h, w, c])
    }

    pub fn partition_var<R: Real>(self, g: &Graph<R>, x: &Var<R>) -> Result<Var<R>> {
        let (h, w, c) = dims3(x)?;
        let s = self.size();
        let idx = self.index(h, w)?;
        g.gather_rows(x, idx, c, vec![h * w / (s * s), s * s, c])
    }

    pub fn unpartition_var<R: Real>(self, g: &Graph<R>, p: &Var<R>, h: usize, w: usize) -> Result<Var<R>> {
        let c = p.channels();
        let inv = invert(&self.index(h, w)?);
        g.gather_rows(p, inv, c, vec![h, w, c])
    }
}

pub(crate) fn dims3<R: Real>(x: &Var<R>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [h, w, c] => Ok((*h, *w, *c)),
        s => Err(Error::dim(format!("expected [H, W, C], got {s:?}"))),
    }
}

/// Source element of each output pixel of depth-to-space with factor
/// `s = 2^n` on an `h'×w'` map of `s²` channels.
fn depth_to_space_index(hc: usize, wc: usize, s: usize) -> Vec<u32> {
    let (h, w) = (hc * s, wc * s);
    let mut idx = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let cell = (y / s) * wc + x / s;
            let ch = (y % s) * s + x % s;
            idx.push((cell * s * s + ch) as u32);
        }
    }
    idx
}

fn d2s_factor(c: usize, n: u32) -> Result<usize> {
    let s = 1usize << n;
    if c != s * s {
        return Err(Error::dim(format!("depth_to_space with N={n} needs {} channels, got {c}", s * s)));
    }
    Ok(s)
}

/// `[H', W', 4^N] → [H'·2^N, W'·2^N, 1]`: channel `c` of cell `(u, v)` goes
/// to pixel `(u·2^N + c / 2^N, v·2^N + c mod 2^N)`.
pub fn depth_to_space<R: Real>(x: &Tensor<R>, n: u32) -> Result<Tensor<R>> {
    let (hc, wc, c) = x.dims3()?;
    let s = d2s_factor(c, n)?;
    gather_tensor(x, &depth_to_space_index(hc, wc, s), 1, &[hc * s, wc * s, 1])
}

/// Inverse of [`depth_to_space`].
pub fn space_to_depth<R: Real>(x: &Tensor<R>, n: u32) -> Result<Tensor<R>> {
    let (h, w, c) = x.dims3()?;
    let s = 1usize << n;
    if c != 1 || h % s != 0 || w % s != 0 {
        return Err(Error::dim(format!("space_to_depth needs [k·{s}, k·{s}, 1], got {:?}", x.shape())));
    }
    let inv = invert(&depth_to_space_index(h / s, w / s, s));
    gather_tensor(x, &inv, 1, &[h / s, w / s, s * s])
}

pub fn depth_to_space_var<R: Real>(g: &Graph<R>, x: &Var<R>, n: u32) -> Result<Var<R>> {
    let (hc, wc, c) = dims3(x)?;
    let s = d2s_factor(c, n)?;
    g.gather_rows(x, depth_to_space_index(hc, wc, s), 1, vec![hc * s, wc * s, 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slot_of(idx: &[u32], w: usize, i: usize, j: usize, l: usize) -> (usize, usize) {
        let slot = idx.iter().position(|&p| p as usize == i * w + j).unwrap();
        (slot / l, slot % l)
    }

    #[test]
    fn block_index_arithmetic() {
        let idx = block_partition_index(4, 4, 2).unwrap();
        assert_eq!(slot_of(&idx, 4, 2, 3, 4), (3, 1));
        let whole = block_partition_index(4, 4, 4).unwrap();
        assert_eq!(whole, (0..16).collect::<Vec<u32>>());
    }

    #[test]
    fn grid_index_arithmetic() {
        let idx = grid_partition_index(4, 4, 2).unwrap();
        assert_eq!(&idx[0..4], &[0, 2, 8, 10]);
        for (k, (i, j)) in [(0, 0), (0, 2), (2, 0), (2, 2)].into_iter().enumerate() {
            assert_eq!(slot_of(&idx, 4, i, j, 4), (0, k));
        }
        let one = grid_partition_index(4, 6, 1).unwrap();
        assert_eq!(one, (0..24).collect::<Vec<u32>>());
    }

    #[test]
    fn non_divisible_extents_are_rejected() {
        assert!(block_partition_index(6, 4, 4).is_err());
        assert!(grid_partition_index(4, 6, 4).is_err());
        let t = Tensor::<f32>::zeros(&[6, 6, 1]).unwrap();
        assert!(Axis::Block(4).partition(&t).is_err());
    }

    #[test]
    fn depth_to_space_examples() {
        let x = Tensor::<f32>::new(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = depth_to_space(&x, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);

        let mut d = vec![0.0f32; 64];
        d[5] = 1.0;
        let y = depth_to_space(&Tensor::new(&[1, 1, 64], d).unwrap(), 3).unwrap();
        assert_eq!(y.at3(0, 5, 0), 1.0);
        assert_eq!(y.data().iter().sum::<f32>(), 1.0);

        assert!(depth_to_space(&Tensor::<f32>::zeros(&[1, 1, 8]).unwrap(), 1).is_err());
    }

    proptest! {
        #[test]
        fn partitions_are_bijections(hs in 1usize..4, ws in 1usize..4, s in 1usize..4, c in 1usize..4, seed in 0u64..1000) {
            use rand::SeedableRng;
            let (h, w) = (hs * s, ws * s);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f64>::uniform(&[h, w, c], -1.0, 1.0, &mut rng).unwrap();
            for axis in [Axis::Block(s), Axis::Grid(s)] {
                let p = axis.partition(&x).unwrap();
                prop_assert_eq!(p.shape(), &[hs * ws, s * s, c][..]);
                prop_assert_eq!(axis.unpartition(&p, h, w).unwrap(), x.clone());
            }
        }

        #[test]
        fn depth_to_space_round_trip(hc in 1usize..4, wc in 1usize..4, n in 1u32..3, seed in 0u64..1000) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = 1usize << (2 * n);
            let x = Tensor::<f64>::uniform(&[hc, wc, c], -1.0, 1.0, &mut rng).unwrap();
            let y = depth_to_space(&x, n).unwrap();
            prop_assert_eq!(space_to_depth(&y, n).unwrap(), x);
        }
    }
}
