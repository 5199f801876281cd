use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::evalkit::{warp_image, warp_point, Homography};
use crate::model::Keypoint;
use crate::tensorgrad::Tensor;

/// Ranges of the random geometric and photometric transforms. Each pair is
/// an inclusive `(lo, hi)` interval.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    pub skew_deg: (f64, f64),
    /// Maximum corner displacement as a fraction of the image side.
    pub perspective: f64,
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub gamma: (f64, f64),
    /// Noise standard deviation is drawn from `[0, noise_sigma]`.
    pub noise_sigma: f64,
    pub crop: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: (-30.0, 30.0),
            scale: (0.7, 1.4),
            skew_deg: (-10.0, 10.0),
            perspective: 0.05,
            brightness: (-0.2, 0.2),
            contrast: (0.8, 1.25),
            gamma: (0.8, 1.25),
            noise_sigma: 0.02,
            crop: 256,
        }
    }
}

impl AugmentConfig {
    /// No geometric or photometric change: a pure random crop.
    pub fn identity(crop: usize) -> Self {
        AugmentConfig {
            rotation_deg: (0.0, 0.0),
            scale: (1.0, 1.0),
            skew_deg: (0.0, 0.0),
            perspective: 0.0,
            brightness: (0.0, 0.0),
            contrast: (1.0, 1.0),
            gamma: (1.0, 1.0),
            noise_sigma: 0.0,
            crop,
        }
    }

    /// Identity geometry with the default photometric ranges.
    pub fn photometric_only(crop: usize) -> Self {
        let d = AugmentConfig::default();
        AugmentConfig {
            brightness: d.brightness,
            contrast: d.contrast,
            gamma: d.gamma,
            noise_sigma: d.noise_sigma,
            ..AugmentConfig::identity(crop)
        }
    }

    pub fn validate(&self, size_multiple: usize) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} range ({lo}, {hi}) is not ordered")))
            }
        };
        ordered("rotation", self.rotation_deg)?;
        ordered("scale", self.scale)?;
        ordered("skew", self.skew_deg)?;
        ordered("brightness", self.brightness)?;
        ordered("contrast", self.contrast)?;
        ordered("gamma", self.gamma)?;
        if self.scale.0 <= 0.0 || self.gamma.0 <= 0.0 || self.contrast.0 < 0.0 {
            return Err(Error::Config("scale, gamma and contrast must be positive".into()));
        }
        if self.skew_deg.0 <= -89.0 || self.skew_deg.1 >= 89.0 {
            return Err(Error::Config("skew must stay within ±89°".into()));
        }
        if !(0.0..0.5).contains(&self.perspective) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("perspective must be in [0, 0.5) and noise non-negative".into()));
        }
        if self.crop == 0 || self.crop % size_multiple != 0 {
            return Err(Error::Config(format!("crop {} must be a positive multiple of {size_multiple}", self.crop)));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Random transform of an `h × w` frame followed by a `crop × crop` window,
/// as one homography into crop coordinates.
pub fn sample_geometry<R: Rng + ?Sized>(cfg: &AugmentConfig, h: usize, w: usize, rng: &mut R) -> Result<Homography> {
    if cfg.crop > h || cfg.crop > w {
        return Err(Error::Config(format!("crop {} exceeds {h}x{w} image", cfg.crop)));
    }
    let theta = draw(rng, cfg.rotation_deg).to_radians();
    let s = draw(rng, cfg.scale);
    let k = draw(rng, cfg.skew_deg).to_radians().tan();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (c, sn) = (theta.cos(), theta.sin());
    // x' = c + R · S · K · (x − c), K = [[1, k], [0, 1]]
    let a = [[s * c, s * (c * k - sn)], [s * sn, s * (sn * k + c)]];
    let affine = Homography::new([
        [a[0][0], a[0][1], cx - a[0][0] * cx - a[0][1] * cy],
        [a[1][0], a[1][1], cy - a[1][0] * cx - a[1][1] * cy],
        [0.0, 0.0, 1.0],
    ])?;
    let geo = if cfg.perspective > 0.0 {
        let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
        let src = [(0.0, 0.0), (wf, 0.0), (wf, hf), (0.0, hf)];
        let jx = cfg.perspective * w as f64;
        let jy = cfg.perspective * h as f64;
        let mut dst = [(0.0, 0.0); 4];
        for (d, &p) in dst.iter_mut().zip(&src) {
            let q = warp_point(&affine, p)?;
            *d = (q.0 + rng.gen_range(-jx..=jx), q.1 + rng.gen_range(-jy..=jy));
        }
        Homography::from_correspondences(&src, &dst)?
    } else {
        affine
    };
    let ox = rng.gen_range(0..=w - cfg.crop) as f64;
    let oy = rng.gen_range(0..=h - cfg.crop) as f64;
    Homography::translation(-ox, -oy).compose(&geo)
}

fn photometric<R: Rng + ?Sized>(img: &mut Tensor<f32>, cfg: &AugmentConfig, rng: &mut R) -> Result<()> {
    let b = draw(rng, cfg.brightness);
    let c = draw(rng, cfg.contrast);
    let g = draw(rng, cfg.gamma);
    let sigma = if cfg.noise_sigma > 0.0 { rng.gen_range(0.0..=cfg.noise_sigma) } else { 0.0 };
    if b == 0.0 && c == 1.0 && g == 1.0 && sigma == 0.0 {
        return Ok(());
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    for v in img.data_mut() {
        let x = f64::from(*v).clamp(0.0, 1.0).powf(g);
        let x = (x - 0.5) * c + 0.5 + b + if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        *v = x.clamp(0.0, 1.0) as f32;
    }
    Ok(())
}

/// Applies one random geometric transform to both images and the keypoints,
/// drops keypoints that leave the crop, then jitters each image's
/// photometry independently.
pub fn augment<R: Rng + ?Sized>(s: &TrainingSample, cfg: &AugmentConfig, rng: &mut R) -> Result<TrainingSample> {
    let (h, w, _) = s.sharp.dims3()?;
    let hm = sample_geometry(cfg, h, w, rng)?;
    let n = cfg.crop;
    let sharp = warp_image(&s.sharp, &hm, n, n, 0.0)?;
    let blurred = warp_image(&s.blurred, &hm, n, n, 0.0)?;
    let mut kps = Vec::with_capacity(s.keypoints.len());
    for k in &s.keypoints {
        let Ok((x, y)) = warp_point(&hm, (k.x, k.y)) else {
            continue;
        };
        if x >= 0.0 && y >= 0.0 && x < n as f64 && y < n as f64 {
            kps.push(Keypoint::new(x, y, k.score));
        }
    }
    let mut out = TrainingSample::new(sharp, blurred, kps)?;
    photometric(&mut out.sharp, cfg, rng)?;
    photometric(&mut out.blurred, cfg, rng)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(h: usize, w: usize, seed: u64) -> TrainingSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Tensor::uniform(&[h, w, 1], 0.0, 1.0, &mut rng).unwrap();
        let kps = vec![Keypoint::new(3.0, 5.0, 0.9), Keypoint::new(20.0, 11.0, 0.5), Keypoint::new(30.0, 30.0, 0.4)];
        TrainingSample::new(img.clone(), img, kps).unwrap()
    }

    #[test]
    fn identity_is_a_crop() {
        let s = sample(40, 48, 0);
        let cfg = AugmentConfig::identity(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hm = sample_geometry(&cfg, 40, 48, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let (ox, oy) = (-hm.matrix()[0][2], -hm.matrix()[1][2]);
        let a = augment(&s, &cfg, &mut rng).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let src = s.sharp.at3(i + oy as usize, j + ox as usize, 0);
                assert_eq!(a.sharp.at3(i, j, 0), src);
            }
        }
        for k in &a.keypoints {
            assert!(s.keypoints.iter().any(|o| o.x - ox == k.x && o.y - oy == k.y));
        }
    }

    #[test]
    fn quarter_turn_maps_coordinates() {
        let side = 32;
        let s = sample(side, side, 1);
        let cfg = AugmentConfig { rotation_deg: (90.0, 90.0), ..AugmentConfig::identity(side) };
        let a = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a.keypoints.len(), s.keypoints.len());
        for (k, o) in a.keypoints.iter().zip(&s.keypoints) {
            assert!((k.x - (side as f64 - 1.0 - o.y)).abs() < 1e-9 && (k.y - o.x).abs() < 1e-9, "{k:?} {o:?}");
        }
        for i in 1..side - 1 {
            for j in 1..side - 1 {
                // target (x', y') = (S-1-y, x) ⇒ source (x, y) = (y', S-1-x')
                let src = s.sharp.at3(side - 1 - j, i, 0);
                assert!((a.sharp.at3(i, j, 0) - src).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn photometric_only_keeps_keypoints() {
        let s = sample(32, 32, 2);
        let a = augment(&s, &AugmentConfig::photometric_only(32), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.keypoints, s.keypoints);
        assert_ne!(a.sharp, s.sharp);
    }

    #[test]
    fn pairing_is_preserved() {
        let s = sample(64, 64, 4);
        let cfg = AugmentConfig { crop: 48, ..AugmentConfig::identity(48) };
        let cfg = AugmentConfig { rotation_deg: (-30.0, 30.0), scale: (0.7, 1.4), skew_deg: (-10.0, 10.0), perspective: 0.05, ..cfg };
        for seed in 0..5 {
            let a = augment(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a.sharp, a.blurred);
        }
    }

    #[test]
    fn crop_larger_than_image_errors() {
        let s = sample(32, 32, 0);
        assert!(augment(&s, &AugmentConfig::identity(64), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate(64).is_ok());
        assert!(AugmentConfig { crop: 100, ..AugmentConfig::default() }.validate(64).is_err());
        assert!(AugmentConfig { scale: (1.4, 0.7), ..AugmentConfig::default() }.validate(64).is_err());
    }

    proptest::proptest! {
        #[test]
        fn augmented_keypoints_stay_inside(seed in 0u64..10_000) {
            // Keypoints on the border rows and columns exercise the crop edge.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = Tensor::uniform(&[48, 48, 1], 0.0, 1.0, &mut rng).unwrap();
            let kps = (0..48).flat_map(|i| [Keypoint::new(i as f64, 0.0, 1.0), Keypoint::new(0.0, i as f64, 1.0), Keypoint::new(47.0, i as f64, 1.0)]).collect();
            let s = TrainingSample::new(img.clone(), img, kps).unwrap();
            let a = augment(&s, &AugmentConfig { crop: 32, ..AugmentConfig::default() }, &mut rng).unwrap();
            proptest::prop_assert!(a.keypoints.iter().all(|k| k.x >= 0.0 && k.y >= 0.0 && k.x < 32.0 && k.y < 32.0));
        }
    }
}
