//! Match visualisation: two gray views side by side, keypoints as crosses,
//! matched pairs joined by lines.

use anyhow::Result;

use blurfeat::model::Keypoint;
use blurfeat::tensorgrad::Tensor;

const MATCHED: [u8; 3] = [40, 220, 60];
const UNMATCHED: [u8; 3] = [230, 40, 40];
const LINE: [u8; 3] = [250, 210, 30];

pub struct Canvas {
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let o = 3 * (y as usize * self.width + x as usize);
            self.rgb[o..o + 3].copy_from_slice(&c);
        }
    }

    fn blit(&mut self, img: &Tensor<f32>, x0: usize) -> Result<()> {
        let (h, w, _) = img.dims3()?;
        for y in 0..h {
            for x in 0..w {
                let v = (img.at3(y, x, 0).clamp(0.0, 1.0) * 255.0).round() as u8;
                self.put((x0 + x) as i64, y as i64, [v; 3]);
            }
        }
        Ok(())
    }

    fn cross(&mut self, x: f64, y: f64, c: [u8; 3]) {
        let (x, y) = (x.round() as i64, y.round() as i64);
        for d in -2..=2 {
            self.put(x + d, y, c);
            self.put(x, y + d, c);
        }
    }

    /// Bresenham segment.
    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
}

/// `matches` index into `kps_ref` and `kps_tgt`.
pub fn side_by_side(
    reference: &Tensor<f32>,
    target: &Tensor<f32>,
    kps_ref: &[Keypoint],
    kps_tgt: &[Keypoint],
    matches: &[(usize, usize, f64)],
) -> Result<Canvas> {
    let (rh, rw, _) = reference.dims3()?;
    let (th, tw, _) = target.dims3()?;
    let (height, width) = (rh.max(th), rw + tw);
    let mut c = Canvas { height, width, rgb: vec![0; 3 * height * width] };
    c.blit(reference, 0)?;
    c.blit(target, rw)?;
    let off = rw as f64;
    let mut ref_hit = vec![false; kps_ref.len()];
    let mut tgt_hit = vec![false; kps_tgt.len()];
    for &(i, j, _) in matches {
        ref_hit[i] = true;
        tgt_hit[j] = true;
        let (a, b) = (kps_ref[i], kps_tgt[j]);
        c.line((a.x.round() as i64, a.y.round() as i64), ((b.x + off).round() as i64, b.y.round() as i64), LINE);
    }
    for (k, hit) in kps_ref.iter().zip(&ref_hit) {
        c.cross(k.x, k.y, if *hit { MATCHED } else { UNMATCHED });
    }
    for (k, hit) in kps_tgt.iter().zip(&tgt_hit) {
        c.cross(k.x + off, k.y, if *hit { MATCHED } else { UNMATCHED });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canvas_is_side_by_side() {
        let a = Tensor::full(&[4, 3, 1], 1.0f32).unwrap();
        let b = Tensor::full(&[6, 2, 1], 0.0f32).unwrap();
        let c = side_by_side(&a, &b, &[], &[], &[]).unwrap();
        assert_eq!((c.height, c.width), (6, 5));
        assert_eq!(&c.rgb[..3], &[255, 255, 255]);
        assert_eq!(&c.rgb[9..12], &[0, 0, 0]);
        // Below the shorter left image stays black.
        assert_eq!(&c.rgb[3 * 5 * 5..3 * 5 * 5 + 3], &[0, 0, 0]);
    }

    #[test]
    fn match_line_joins_both_views() {
        let img = Tensor::full(&[9, 9, 1], 0.0f32).unwrap();
        let k = [Keypoint::new(4.0, 4.0, 1.0)];
        let c = side_by_side(&img, &img, &k, &k, &[(0, 0, 0.0)]).unwrap();
        let px = |x: usize, y: usize| &c.rgb[3 * (y * c.width + x)..3 * (y * c.width + x) + 3];
        assert_eq!(px(4, 4), MATCHED);
        assert_eq!(px(13, 4), MATCHED);
        assert_eq!(px(9, 4), LINE);
    }

    #[test]
    fn unmatched_points_and_clipping() {
        let img = Tensor::full(&[5, 5, 1], 0.0f32).unwrap();
        let k = [Keypoint::new(0.0, 0.0, 1.0)];
        let c = side_by_side(&img, &img, &k, &[], &[]).unwrap();
        assert_eq!(&c.rgb[..3], &UNMATCHED);
    }
}
