use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, AugmentConfig};
use super::heatmap::{mse_loss, render_heatmap, DEFAULT_SIGMA};
use super::TrainingSample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensorgrad::{adam_step, AdamConfig, AdamState, Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Last epoch trained at `lr_initial`.
    pub decay_start_epoch: usize,
    /// Standard deviation of target Gaussians, in pixels.
    pub sigma_gt: f64,
    /// Probability of feeding the sharp image instead of the blurred one.
    pub mix_sharp: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            epochs: 50,
            lr_initial: 1e-4,
            lr_final: 1e-6,
            decay_start_epoch: 20,
            sigma_gt: DEFAULT_SIGMA,
            mix_sharp: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr_initial > 0.0 && self.lr_final >= 0.0 && self.lr_final <= self.lr_initial) {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 <= final ({}) <= initial ({})",
                self.lr_final, self.lr_initial
            )));
        }
        if self.epochs > 0 && self.decay_start_epoch >= self.epochs {
            return Err(Error::Config(format!(
                "decay start {} must precede the last epoch {}",
                self.decay_start_epoch, self.epochs
            )));
        }
        if !(self.sigma_gt > 0.0) || !(0.0..=1.0).contains(&self.mix_sharp) {
            return Err(Error::Config("sigma_gt must be positive and mix_sharp in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Constant until `decay_start_epoch`, then linear down to `lr_final` at the
/// last epoch. Epochs count from 1.
pub fn lr_schedule(epoch: usize, tc: &TrainConfig) -> Result<f64> {
    if epoch == 0 || epoch > tc.epochs {
        return Err(Error::Contract(format!("epoch {epoch} outside 1..={}", tc.epochs)));
    }
    if epoch <= tc.decay_start_epoch {
        return Ok(tc.lr_initial);
    }
    let t = (epoch - tc.decay_start_epoch) as f64 / (tc.epochs - tc.decay_start_epoch) as f64;
    Ok(tc.lr_initial + t * (tc.lr_final - tc.lr_initial))
}

/// Loss curves of a run. `step_losses[i]` is the mean image loss of the
/// batch that produced update `i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Progress notification after each optimizer step.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, epoch, index)`, so sample preparation does
/// not depend on processing order.
pub fn stream_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ epoch) ^ index))
}

/// Input image and target heatmap for one sample in one epoch.
fn prepare(
    s: &TrainingSample,
    tc: &TrainConfig,
    ac: Option<&AugmentConfig>,
    epoch: usize,
    index: usize,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let mut rng = stream_rng(tc.seed, epoch as u64, index as u64);
    let use_sharp = tc.mix_sharp > 0.0 && rng.gen_bool(tc.mix_sharp);
    let s = match ac {
        Some(cfg) => augment(s, cfg, &mut rng)?,
        None => s.clone(),
    };
    let (h, w, _) = s.sharp.dims3()?;
    let target = render_heatmap(&s.keypoints, h, w, tc.sigma_gt)?;
    Ok((if use_sharp { s.sharp } else { s.blurred }, target))
}

/// Loss and parameter gradients of one image.
fn image_gradients(model: &Model, x: Tensor<f32>, target: &Tensor<f32>) -> Result<(f64, Vec<Tensor<f32>>)> {
    let m = model.config().size_multiple();
    let (h, w, _) = x.dims3()?;
    if h % m != 0 || w % m != 0 {
        return Err(Error::dim(format!("training images must be multiples of {m}, got {h}x{w}")));
    }
    let g = Graph::new();
    let p = model.params().bind(&g, true);
    let xv = g.constant(x);
    let r = model.forward_var(&g, &p, &xv)?;
    let loss = g.mse(&r, target)?;
    let l = f64::from(loss.item());
    if !l.is_finite() {
        return Ok((l, Vec::new()));
    }
    g.backward(&loss)?;
    Ok((l, p.grads()))
}

/// Mini-batch Adam on the heatmap loss. Gradients are averaged over the
/// images of each batch; the learning rate follows [`lr_schedule`].
pub fn train<F>(
    dataset: &[TrainingSample],
    tc: &TrainConfig,
    ac: Option<&AugmentConfig>,
    model: &mut Model,
    mut progress: F,
) -> Result<TrainLog>
where
    F: FnMut(&StepInfo),
{
    tc.validate()?;
    if dataset.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if let Some(cfg) = ac {
        cfg.validate(model.config().size_multiple())?;
    }
    let mut state = AdamState::new(model.params().tensors());
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;
    for epoch in 1..=tc.epochs {
        let lr = lr_schedule(epoch, tc)?;
        let adam = AdamConfig::with_lr(lr);
        order.shuffle(&mut stream_rng(tc.seed, epoch as u64, u64::MAX));
        let mut epoch_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let mut acc: Option<Vec<Tensor<f32>>> = None;
            let mut batch_loss = 0.0;
            let k = 1.0 / batch.len() as f32;
            for &i in batch {
                let (x, target) = prepare(&dataset[i], tc, ac, epoch, i)?;
                let (l, grads) = image_gradients(model, x, &target)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("loss at epoch {epoch}, step {}, sample {i}", step + 1)));
                }
                batch_loss += l / batch.len() as f64;
                match acc.as_mut() {
                    None => {
                        let mut gs = grads;
                        gs.iter_mut().for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= k));
                        acc = Some(gs);
                    }
                    Some(a) => {
                        for (dst, src) in a.iter_mut().zip(&grads) {
                            dst.data_mut().iter_mut().zip(src.data()).for_each(|(d, s)| *d += k * s);
                        }
                    }
                }
            }
            let grads = acc.expect("batches are non-empty");
            adam_step(model.params_mut().tensors_mut(), &grads, &mut state, &adam)?;
            step += 1;
            epoch_sum += batch_loss * batch.len() as f64;
            log.step_losses.push(batch_loss);
            progress(&StepInfo { epoch, step, lr, loss: batch_loss });
        }
        log.epoch_losses.push(epoch_sum / dataset.len() as f64);
    }
    Ok(log)
}

/// Mean loss over a set without augmentation, on blurred or sharp inputs.
pub fn dataset_loss(model: &Model, dataset: &[TrainingSample], sigma: f64, blurred: bool) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Contract("empty dataset".into()));
    }
    let mut total = 0.0;
    for s in dataset {
        let x = if blurred { &s.blurred } else { &s.sharp };
        let (h, w, _) = x.dims3()?;
        let r = model.score_map(x)?;
        total += mse_loss(&r, &render_heatmap(&s.keypoints, h, w, sigma)?)?;
    }
    Ok(total / dataset.len() as f64)
}
