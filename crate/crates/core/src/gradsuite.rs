//! Finite-difference verification of every differentiable block.
//!
//! Each entry is checked in double precision over several seeds on inputs
//! no larger than 8×8×8; the worst relative error per entry is reported.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{block_gradcheck_scaled, fan_in_scale, Block, GatedSpatialMlp, MultiAxisGmlp, Rmab, SeBlock};
use crate::error::Result;
use crate::model::DetectionHead;
use crate::tensorgrad::{gradcheck, gradcheck_inputs, GradcheckReport, Tensor};

pub const SUITE_TOLERANCE: f64 = 1e-4;
pub const SUITE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Names of the checked blocks, in report order.
pub const SUITE_BLOCKS: [&str; 11] = [
    "dense_channels",
    "gelu",
    "layer_norm",
    "softmax_channels",
    "maxpool2",
    "gated_spatial_mlp",
    "multi_axis_gmlp_block",
    "se_block",
    "rmab",
    "detection_head",
    "mse_loss",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub block: &'static str,
    /// Worst relative error over all seeds.
    pub max_rel_error: f64,
    pub checked: usize,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < SUITE_TOLERANCE
    }
}

/// Distinct values with gaps far above the difference step, so no
/// perturbation changes which element of a pooling window wins.
fn distinct_map(shape: &[usize], seed: u64) -> Result<Tensor<f64>> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / n as f64).collect();
    vals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Tensor::new(shape, vals)
}

/// Composite blocks draw dense weights at fan-in scale, the regime they
/// operate in; unscaled weights saturate GELU units and leave gradients
/// dominated by difference round-off.
fn scaled<B: Block>(block: &B, input_shape: &[usize], seed: u64) -> Result<GradcheckReport> {
    block_gradcheck_scaled(block, input_shape, seed, fan_in_scale)
}

/// Checks one named block for one seed.
pub fn check_block(block: &str, seed: u64) -> Result<GradcheckReport> {
    match block {
        "dense_channels" => gradcheck(|g, v| g.dense_channels(&v[0], &v[1], &v[2]), &[&[4, 4, 6], &[6, 5], &[5]], seed),
        "gelu" => gradcheck(|g, v| Ok(g.gelu(&v[0])), &[&[8, 8, 8]], seed),
        "layer_norm" => gradcheck(|g, v| g.layer_norm(&v[0], &v[1], &v[2], 1e-5), &[&[4, 4, 8], &[8], &[8]], seed),
        "softmax_channels" => gradcheck(|g, v| Ok(g.softmax_channels(&v[0])), &[&[4, 4, 8]], seed),
        "maxpool2" => gradcheck_inputs(|g, v| g.maxpool2(&v[0]), &[distinct_map(&[8, 8, 8], seed)?], seed),
        "gated_spatial_mlp" => scaled(&GatedSpatialMlp::new("gsm", 4, 4), &[2, 4, 4], seed),
        "multi_axis_gmlp_block" => scaled(&MultiAxisGmlp::new("mab", 8, 2, 2)?, &[4, 4, 8], seed),
        "se_block" => scaled(&SeBlock::new("se", 8, 4)?, &[4, 4, 8], seed),
        "rmab" => scaled(&Rmab::new("rmab", 4, 2, 4)?, &[4, 4, 4], seed),
        "detection_head" => scaled(&DetectionHead::new("head", 8, 8, 1), &[4, 4, 8], seed),
        "mse_loss" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let target = Tensor::uniform(&[8, 8, 1], 0.0, 1.0, &mut rng)?;
            gradcheck(|g, v| g.mse(&v[0], &target), &[&[8, 8, 1]], seed)
        }
        other => Err(crate::Error::Config(format!("unknown block {other:?}"))),
    }
}

/// Every block over `seeds`.
pub fn run_gradient_suite(seeds: &[u64]) -> Result<Vec<SuiteEntry>> {
    SUITE_BLOCKS
        .iter()
        .map(|&block| {
            let mut entry = SuiteEntry { block, max_rel_error: 0.0, checked: 0 };
            for &seed in seeds {
                let r = check_block(block, seed)?;
                entry.max_rel_error = entry.max_rel_error.max(r.max_rel_error);
                entry.checked += r.checked;
            }
            Ok(entry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_block_passes_one_seed() {
        for block in SUITE_BLOCKS {
            let r = check_block(block, 11).unwrap();
            assert!(r.max_rel_error < SUITE_TOLERANCE, "{block}: {r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn unknown_block_is_an_error() {
        assert!(check_block("conv", 0).is_err());
    }

    #[test]
    fn pooling_inputs_are_well_separated() {
        let t = distinct_map(&[4, 4, 2], 3).unwrap();
        let mut v = t.data().to_vec();
        v.sort_by(f64::total_cmp);
        assert!(v.windows(2).all(|w| w[1] - w[0] > 1e-3));
    }
}
