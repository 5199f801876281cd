use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R> {
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
    t: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &[Tensor<R>]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![R::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![R::zero(); p.numel()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. On a non-finite gradient nothing is
/// modified and an error is returned.
pub fn adam_step<R: Real>(
    params: &mut [Tensor<R>],
    grads: &[Tensor<R>],
    state: &mut AdamState<R>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.numel() {
            return Err(Error::dim(format!(
                "adam: parameter {i} has shape {:?} but gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        g.check_finite("gradient")?;
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (R::lit(cfg.beta1), R::lit(cfg.beta2));
    let (one_b1, one_b2) = (R::lit(1.0 - cfg.beta1), R::lit(1.0 - cfg.beta2));
    let c1 = R::lit(1.0 / (1.0 - cfg.beta1.powi(t)));
    let c2 = R::lit(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr = R::lit(cfg.lr);
    let eps = R::lit(cfg.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = b1 * m[k] + one_b1 * gk;
            v[k] = b2 * v[k] + one_b2 * gk * gk;
            let mh = m[k] * c1;
            let vh = v[k] * c2;
            *w -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = vec![t(&[1.0, -2.0, 0.5])];
        let g = vec![t(&[0.3, -7.0, 1e-3])];
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::with_lr(0.01);
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        let want = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p[0].data().iter().zip(want) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = vec![t(&[1.0, 2.0])];
        let before = p.clone();
        let g = vec![t(&[0.0, 0.0])];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn second_identical_step_is_not_larger() {
        let mut p = vec![t(&[0.0, 0.0, 0.0])];
        let g = vec![t(&[0.5, -1.5, 3.0])];
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        let d1: Vec<f64> = p[0].data().to_vec();
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        for (k, &x) in p[0].data().iter().enumerate() {
            assert!((x - d1[k]).abs() <= d1[k].abs() + 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = vec![t(&[1.0, 2.0])];
        let before = p.clone();
        let g = vec![t(&[f64::NAN, 0.0])];
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut st, &AdamConfig::default()).is_err());
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = vec![t(&[1.0, 2.0])];
        let g = vec![t(&[1.0])];
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut st, &AdamConfig::default()).is_err());
    }
}
