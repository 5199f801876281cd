//! Network building blocks and their parameter bookkeeping.

mod layers;
mod params;
mod partition;

pub use layers::{
    Block, ChannelMlp, Dense, GatedSpatialMlp, MultiAxisGmlp, Norm, Rmab, SeBlock, LN_EPS, SPATIAL_INIT,
};
pub use params::{BoundParams, InitKind, ParamSpec, ParamStore};
pub use partition::{
    block_partition_index, depth_to_space, depth_to_space_var, grid_partition_index, invert, space_to_depth,
    Axis,
};

use crate::error::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensorgrad::{gradcheck_inputs, GradcheckReport, Graph, Real, Tensor, Var};

/// Finite-difference check of `block` with respect to its input and every
/// parameter, all drawn uniformly from `[-2, 2)`.
pub fn block_gradcheck<B: Block>(block: &B, input_shape: &[usize], seed: u64) -> Result<GradcheckReport> {
    block_gradcheck_scaled(block, input_shape, seed, |_| 1.0)
}

/// As [`block_gradcheck`], with each parameter drawn from
/// `[-2, 2) · scale(spec)` instead.
pub fn block_gradcheck_scaled<B, S>(block: &B, input_shape: &[usize], seed: u64, scale: S) -> Result<GradcheckReport>
where
    B: Block,
    S: Fn(&ParamSpec) -> f64,
{
    let specs = block.specs();
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = vec![Tensor::uniform(input_shape, -2.0, 2.0, &mut rng)?];
    for s in &specs {
        let k = scale(s);
        inputs.push(Tensor::uniform(&s.shape, -2.0 * k, 2.0 * k, &mut rng)?);
    }
    gradcheck_inputs(
        |g, v| {
            let bp = BoundParams::from_vars(&names, v[1..].to_vec())?;
            block.forward(g, &bp, &v[0])
        },
        &inputs,
        seed,
    )
}

/// Scale for [`block_gradcheck_scaled`] that shrinks dense weights by
/// `1/sqrt(fan_in)` so activations stay out of saturated regions.
pub fn fan_in_scale(spec: &ParamSpec) -> f64 {
    if spec.shape.len() == 2 && spec.name.ends_with(".w") {
        1.0 / (spec.shape[0] as f64).sqrt()
    } else {
        1.0
    }
}

/// Forward evaluation of a block on a concrete input with given parameters.
pub fn run_block<B: Block, R: Real>(block: &B, store: &ParamStore<R>, x: &Tensor<R>) -> Result<Tensor<R>> {
    let g = Graph::inference();
    let p = store.bind(&g, false);
    let xv: Var<R> = g.constant(x.clone());
    Ok(block.forward(&g, &p, &xv)?.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorgrad::gelu_scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_map(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(shape, -2.0, 2.0, &mut rng).unwrap()
    }

    fn zero(store: &mut ParamStore<f64>, name: &str) {
        store.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    #[test]
    fn channel_mlp_zero_path_is_identity() {
        let b = ChannelMlp::new("m", 6, 6, 2);
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 3).unwrap();
        for n in ["m.fc1.w", "m.fc1.b", "m.fc2.w", "m.fc2.b"] {
            zero(&mut st, n);
        }
        let x = rand_map(&[3, 4, 6], 1);
        assert_eq!(run_block(&b, &st, &x).unwrap(), x);
    }

    #[test]
    fn stem_with_unit_weights_copies_gray_level() {
        let b = ChannelMlp::stem("stem", 1, 8);
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 0).unwrap();
        st.get_mut("stem.fc.w").unwrap().data_mut().iter_mut().for_each(|v| *v = 1.0);
        zero(&mut st, "stem.fc.b");
        let x = Tensor::full(&[4, 4, 1], 0.5).unwrap();
        let y = run_block(&b, &st, &x).unwrap();
        assert_eq!(y.shape(), &[4, 4, 8]);
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn channel_mlp_shapes() {
        let b = ChannelMlp::new("m", 32, 32, 2);
        let st = ParamStore::<f32>::from_specs(&b.specs(), 0).unwrap();
        let y = run_block(&b, &st, &Tensor::zeros(&[16, 16, 32]).unwrap()).unwrap();
        assert_eq!(y.shape(), &[16, 16, 32]);
        let widen = ChannelMlp::new("m", 8, 16, 2);
        let st = ParamStore::<f32>::from_specs(&widen.specs(), 0).unwrap();
        assert_eq!(run_block(&widen, &st, &Tensor::zeros(&[2, 2, 8]).unwrap()).unwrap().shape(), &[2, 2, 16]);
        assert!(run_block(&widen, &st, &Tensor::zeros(&[2, 2, 4]).unwrap()).is_err());
    }

    /// `u + fc_out(z1 ⊙ gate)` evaluated by hand with plain loops.
    fn gsm_by_hand(b: &GatedSpatialMlp, st: &ParamStore<f64>, u: &Tensor<f64>) -> Vec<f64> {
        let (gs, l, c) = (u.shape()[0], u.shape()[1], u.shape()[2]);
        let get = |n: &str| st.get(&format!("{}.{n}", b.name)).unwrap().data().to_vec();
        let ln = |row: &[f64], gamma: &[f64], beta: &[f64]| -> Vec<f64> {
            let m = row.iter().sum::<f64>() / row.len() as f64;
            let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / row.len() as f64;
            row.iter().enumerate().map(|(k, x)| (x - m) / (v + LN_EPS).sqrt() * gamma[k] + beta[k]).collect()
        };
        let (w_in, b_in, w_out, b_out) = (get("fc_in.w"), get("fc_in.b"), get("fc_out.w"), get("fc_out.b"));
        let (sw, sb) = (get("spatial.w"), get("spatial.b"));
        let mut z1 = vec![0.0; gs * l * c];
        let mut z2 = vec![0.0; gs * l * c];
        for r in 0..gs * l {
            let n = ln(&u.data()[r * c..(r + 1) * c], &get("ln_in.gamma"), &get("ln_in.beta"));
            for o in 0..2 * c {
                let mut s = b_in[o];
                for k in 0..c {
                    s += n[k] * w_in[k * 2 * c + o];
                }
                let s = gelu_scalar(s);
                if o < c {
                    z1[r * c + o] = s;
                } else {
                    z2[r * c + o - c] = s;
                }
            }
            let n2 = ln(&z2[r * c..(r + 1) * c], &get("ln_gate.gamma"), &get("ln_gate.beta"));
            z2[r * c..(r + 1) * c].copy_from_slice(&n2);
        }
        let mut out = u.data().to_vec();
        for grp in 0..gs {
            for i in 0..l {
                let mut gated = vec![0.0; c];
                for ch in 0..c {
                    let mut gate = sb[i];
                    for m in 0..l {
                        gate += sw[i * l + m] * z2[(grp * l + m) * c + ch];
                    }
                    gated[ch] = z1[(grp * l + i) * c + ch] * gate;
                }
                for o in 0..c {
                    let mut s = b_out[o];
                    for k in 0..c {
                        s += gated[k] * w_out[k * c + o];
                    }
                    out[(grp * l + i) * c + o] += s;
                }
            }
        }
        out
    }

    #[test]
    fn gated_mlp_with_identity_gate_uses_only_channel_path() {
        let b = GatedSpatialMlp::new("s", 4, 9);
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 5).unwrap();
        zero(&mut st, "s.spatial.w");
        st.get_mut("s.spatial.b").unwrap().data_mut().iter_mut().for_each(|v| *v = 1.0);
        let u = rand_map(&[3, 9, 4], 2);
        let y = run_block(&b, &st, &u).unwrap();
        let want = gsm_by_hand(&b, &st, &u);
        for (a, w) in y.data().iter().zip(&want) {
            assert!((a - w).abs() < 1e-12);
        }
        // the gate no longer sees the second half: perturbing ln_gate changes nothing
        let mut st2 = st.clone();
        st2.get_mut("s.ln_gate.gamma").unwrap().data_mut()[0] = 9.0;
        assert_eq!(run_block(&b, &st2, &u).unwrap(), y);
    }

    #[test]
    fn gated_mlp_matches_hand_evaluation() {
        for len in [1, 4] {
            let b = GatedSpatialMlp::new("s", 3, len);
            let mut st = ParamStore::<f64>::from_specs(&b.specs(), 11).unwrap();
            for v in st.get_mut("s.spatial.w").unwrap().data_mut() {
                *v = 0.3;
            }
            let u = rand_map(&[2, len, 3], 4);
            let y = run_block(&b, &st, &u).unwrap();
            for (a, w) in y.data().iter().zip(&gsm_by_hand(&b, &st, &u)) {
                assert!((a - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gated_mlp_gradcheck() {
        let b = GatedSpatialMlp::new("s", 4, 4);
        let r = block_gradcheck(&b, &[2, 4, 4], 0).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn multi_axis_zero_output_is_identity_and_keeps_shape() {
        let b = MultiAxisGmlp::new("x", 8, 2, 2).unwrap();
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 1).unwrap();
        zero(&mut st, "x.fc_out.w");
        zero(&mut st, "x.fc_out.b");
        let x = rand_map(&[4, 6, 8], 3);
        assert_eq!(run_block(&b, &st, &x).unwrap(), x);

        let big = MultiAxisGmlp::new("x", 64, 8, 8).unwrap();
        let st = ParamStore::<f32>::from_specs(&big.specs(), 1).unwrap();
        let y = run_block(&big, &st, &Tensor::zeros(&[32, 32, 64]).unwrap()).unwrap();
        assert_eq!(y.shape(), &[32, 32, 64]);
    }

    #[test]
    fn multi_axis_rejects_bad_config_and_extents() {
        assert!(MultiAxisGmlp::new("x", 7, 2, 2).is_err());
        let b = MultiAxisGmlp::new("x", 4, 4, 2).unwrap();
        let st = ParamStore::<f64>::from_specs(&b.specs(), 1).unwrap();
        let r = run_block(&b, &st, &Tensor::zeros(&[6, 8, 4]).unwrap());
        assert!(matches!(r, Err(crate::Error::Contract(_))));
    }

    fn roll_rows(x: &Tensor<f64>, shift: usize) -> Tensor<f64> {
        let (h, w, c) = x.dims3().unwrap();
        let mut out = vec![0.0; x.numel()];
        for i in 0..h {
            let src = ((i + h - shift) % h) * w * c;
            out[i * w * c..(i + 1) * w * c].copy_from_slice(&x.data()[src..src + w * c]);
        }
        Tensor::new(&[h, w, c], out).unwrap()
    }

    #[test]
    fn local_branch_is_equivariant_to_block_strided_shifts() {
        let b = MultiAxisGmlp::new("x", 6, 3, 3).unwrap();
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 7).unwrap();
        for v in st.get_mut("x.local.spatial.w").unwrap().data_mut() {
            *v *= 300.0;
        }
        zero(&mut st, "x.global.fc_out.w");
        zero(&mut st, "x.global.fc_out.b");
        let x = rand_map(&[9, 6, 6], 8);
        let y = run_block(&b, &st, &x).unwrap();
        let ys = run_block(&b, &st, &roll_rows(&x, 3)).unwrap();
        assert!(roll_rows(&y, 3).max_abs_diff(&ys) < 1e-12);
        // a shift that is not a multiple of the block size breaks it
        let yo = run_block(&b, &st, &roll_rows(&x, 1)).unwrap();
        assert!(roll_rows(&y, 1).max_abs_diff(&yo) > 1e-6);
    }

    #[test]
    fn multi_axis_gradcheck() {
        let b = MultiAxisGmlp::new("x", 8, 2, 2).unwrap();
        for seed in 0..5 {
            let r = block_gradcheck(&b, &[4, 4, 8], seed).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn se_zero_excitation_halves_input() {
        let b = SeBlock::new("se", 8, 4).unwrap();
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 0).unwrap();
        for n in ["se.fc1.w", "se.fc1.b", "se.fc2.w", "se.fc2.b"] {
            zero(&mut st, n);
        }
        let x = rand_map(&[4, 4, 8], 1);
        let y = run_block(&b, &st, &x).unwrap();
        for (a, v) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, v / 2.0);
        }
    }

    #[test]
    fn se_squeeze_is_linear_and_gate_bounds_output() {
        let g = Graph::<f64>::inference();
        let x = rand_map(&[4, 4, 8], 2);
        let m1 = g.mean_rows(&g.constant(x.clone())).to_tensor();
        let scaled = Tensor::new(&[4, 4, 8], x.data().iter().map(|v| v * 2.5).collect()).unwrap();
        let m2 = g.mean_rows(&g.constant(scaled)).to_tensor();
        for (a, b) in m1.data().iter().zip(m2.data()) {
            assert!((a * 2.5 - b).abs() < 1e-12);
        }
        let b = SeBlock::new("se", 8, 4).unwrap();
        let st = ParamStore::<f64>::from_specs(&b.specs(), 9).unwrap();
        let y = run_block(&b, &st, &x).unwrap();
        assert!(y.data().iter().zip(x.data()).all(|(o, i)| o.abs() <= i.abs()));
    }

    #[test]
    fn se_rejects_indivisible_reduction() {
        assert!(SeBlock::new("se", 10, 4).is_err());
        assert!(Rmab::new("r", 6, 2, 4).is_err());
    }

    #[test]
    fn se_gradcheck() {
        let b = SeBlock::new("se", 8, 4).unwrap();
        let r = block_gradcheck(&b, &[4, 4, 8], 0).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn rmab_zero_projection_is_identity() {
        let b = Rmab::new("r", 8, 2, 4).unwrap();
        let mut st = ParamStore::<f64>::from_specs(&b.specs(), 0).unwrap();
        zero(&mut st, "r.fc2.w");
        zero(&mut st, "r.fc2.b");
        let x = rand_map(&[3, 3, 8], 5);
        assert_eq!(run_block(&b, &st, &x).unwrap(), x);

        let b = Rmab::new("r", 32, 2, 4).unwrap();
        let st = ParamStore::<f32>::from_specs(&b.specs(), 0).unwrap();
        assert_eq!(run_block(&b, &st, &Tensor::zeros(&[64, 64, 32]).unwrap()).unwrap().shape(), &[64, 64, 32]);
    }

    #[test]
    fn rmab_gradcheck() {
        let b = Rmab::new("r", 4, 2, 4).unwrap();
        let r = block_gradcheck(&b, &[4, 4, 4], 0).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn spatial_gate_init_is_near_identity() {
        let b = GatedSpatialMlp::new("s", 4, 16);
        let st = ParamStore::<f32>::from_specs(&b.specs(), 0).unwrap();
        assert!(st.get("s.spatial.w").unwrap().data().iter().all(|v| v.abs() <= SPATIAL_INIT as f32));
        assert!(st.get("s.spatial.b").unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dense_param_count() {
        assert_eq!(Dense::new("d", 2, 3).param_count(), 9);
    }

    #[test]
    fn store_validation_catches_shape_drift() {
        let b = SeBlock::new("se", 8, 4).unwrap();
        let st = ParamStore::<f32>::from_specs(&b.specs(), 0).unwrap();
        assert!(st.validate(&b.specs()).is_ok());
        let other = SeBlock::new("se", 8, 2).unwrap();
        assert!(st.validate(&other.specs()).is_err());
    }
}
