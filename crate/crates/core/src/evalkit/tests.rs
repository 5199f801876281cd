use super::*;
use proptest::prelude::*;

fn kp(x: f64, y: f64, s: f64) -> Keypoint {
    Keypoint::new(x, y, s)
}

fn close(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    (a.0 - b.0).abs() < tol && (a.1 - b.1).abs() < tol
}

/// Independent greedy: repeatedly scan the whole matrix for the smallest
/// admissible unused pair.
fn greedy_by_scanning(errors: &[Vec<f64>], eps: f64) -> Vec<(usize, usize)> {
    let mut used_r = vec![false; errors.len()];
    let mut used_t = vec![false; errors.first().map_or(0, Vec::len)];
    let mut out = vec![];
    loop {
        let mut best: Option<(usize, usize)> = None;
        for (i, row) in errors.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                if used_r[i] || used_t[j] || e >= eps {
                    continue;
                }
                if best.map_or(true, |(bi, bj)| e < errors[bi][bj]) {
                    best = Some((i, j));
                }
            }
        }
        match best {
            Some((i, j)) => {
                used_r[i] = true;
                used_t[j] = true;
                out.push((i, j));
            }
            None => return out,
        }
    }
}

fn max_cardinality(errors: &[Vec<f64>], eps: f64, i: usize, used: &mut Vec<bool>) -> usize {
    if i == errors.len() {
        return 0;
    }
    let mut best = max_cardinality(errors, eps, i + 1, used);
    for j in 0..used.len() {
        if !used[j] && errors[i][j] < eps {
            used[j] = true;
            best = best.max(1 + max_cardinality(errors, eps, i + 1, used));
            used[j] = false;
        }
    }
    best
}

#[test]
fn warp_examples() {
    let p = (13.5, -2.0);
    assert_eq!(warp_point(&Homography::identity(), p).unwrap(), p);
    assert_eq!(warp_point(&Homography::translation(3.0, 4.0), p).unwrap(), (16.5, 2.0));
    let h = Homography::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.001, 0.0, 1.0]]).unwrap();
    let (x, y) = warp_point(&h, (100.0, 50.0)).unwrap();
    assert!((x - 100.0 / 1.1).abs() < 1e-9 && (y - 50.0 / 1.1).abs() < 1e-9);
    let inf = Homography::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.01, 0.0, 1.0]]).unwrap();
    assert!(warp_point(&inf, (100.0, 0.0)).is_err());
}

#[test]
fn jacobian_examples() {
    let p = (7.0, 9.0);
    assert!((jacobian_scale(&Homography::identity(), p).unwrap() - 1.0).abs() < 1e-12);
    let s2 = Homography::new([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    assert!((jacobian_scale(&s2, p).unwrap() - 2.0).abs() < 1e-12);
    let an = Homography::new([[2.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    assert!((jacobian_scale(&an, p).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn jacobian_matches_finite_differences() {
    let h = Homography::new([[1.1, 0.2, 3.0], [-0.1, 0.9, 1.0], [1e-3, -2e-3, 1.0]]).unwrap();
    let p = (40.0, 25.0);
    let d = 1e-5;
    let f = |x: f64, y: f64| warp_point(&h, (x, y)).unwrap();
    let (ax, ay) = f(p.0 + d, p.1);
    let (bx, by) = f(p.0 - d, p.1);
    let (cx, cy) = f(p.0, p.1 + d);
    let (ex, ey) = f(p.0, p.1 - d);
    let j = [[(ax - bx) / (2.0 * d), (cx - ex) / (2.0 * d)], [(ay - by) / (2.0 * d), (cy - ey) / (2.0 * d)]];
    let s = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs().sqrt();
    assert!((jacobian_scale(&h, p).unwrap() - s).abs() < 1e-8);
}

#[test]
fn singular_and_normalised() {
    assert!(Homography::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    assert!(Homography::new([[f64::NAN, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    let h = Homography::new([[2.0, 0.0, 4.0], [0.0, 2.0, 6.0], [0.0, 0.0, 2.0]]).unwrap();
    assert_eq!(h, Homography::translation(2.0, 3.0));
}

#[test]
fn correspondences_recover_homography() {
    let h = Homography::new([[0.9, 0.1, 5.0], [-0.05, 1.1, -3.0], [2e-4, 1e-4, 1.0]]).unwrap();
    let src = [(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0)];
    let dst = src.map(|p| warp_point(&h, p).unwrap());
    let g = Homography::from_correspondences(&src, &dst).unwrap();
    for (a, b) in h.matrix().iter().flatten().zip(g.matrix().iter().flatten()) {
        assert!((a - b).abs() < 1e-9);
    }
    let collinear = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
    assert!(Homography::from_correspondences(&collinear, &dst).is_err());
}

#[test]
fn warp_image_translation_shifts_pixels() {
    let data: Vec<f32> = (0..20).map(|v| v as f32).collect();
    let src = crate::tensorgrad::Tensor::new(&[4, 5, 1], data).unwrap();
    let out = warp_image(&src, &Homography::translation(1.0, 0.0), 4, 5, -1.0).unwrap();
    for i in 0..4 {
        assert_eq!(out.data()[i * 5], -1.0);
        for j in 1..5 {
            assert_eq!(out.data()[i * 5 + j], src.data()[i * 5 + j - 1]);
        }
    }
}

#[test]
fn overlap_examples() {
    let id = Homography::identity();
    assert_eq!(region_overlap_error((5.0, 5.0), (5.0, 5.0), &id, 4.0).unwrap(), 0.0);
    let e = region_overlap_error((10.0, 10.0), (12.0, 10.0), &id, 4.0).unwrap();
    assert_eq!(e, 0.4);
    assert!(match_one_to_one(&[vec![e]], DEFAULT_EPS).is_empty());
    assert_eq!(region_overlap_error((0.0, 0.0), (30.0, 0.0), &id, 4.0).unwrap(), 1.0);
    assert!(region_overlap_error((0.0, 0.0), (0.0, 0.0), &id, 0.0).is_err());
}

#[test]
fn scaled_warp_uses_jacobian_side() {
    let s2 = Homography::new([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    // warped square side 16 centred at (20, 20) contains target side 8: IoU 64/256
    let e = region_overlap_error((10.0, 10.0), (20.0, 20.0), &s2, 4.0).unwrap();
    assert!((e - 0.75).abs() < 1e-12);
}

#[test]
fn shared_region_examples() {
    let dims = (64, 64);
    let kps = vec![kp(2.0, 30.0, 0.9), kp(10.0, 10.0, 0.8), kp(40.0, 50.0, 0.7), kp(59.9, 5.0, 0.6)];
    let (r, t) = shared_region_filter(&kps, &kps, &Homography::identity(), dims, dims, 4.0).unwrap();
    assert_eq!(r, vec![kps[1], kps[2], kps[3]]);
    assert_eq!(t, r);
    let far = Homography::translation(64.0, 0.0);
    let (r, t) = shared_region_filter(&kps, &kps, &far, dims, dims, 4.0).unwrap();
    assert!(r.is_empty() && t.is_empty());
    let half = Homography::translation(32.0, 0.0);
    let (r, _) = shared_region_filter(&kps, &kps, &half, dims, dims, 4.0).unwrap();
    assert!(r.iter().all(|k| k.x < 28.0));
    assert_eq!(r, vec![kps[0], kps[1]]);
}

#[test]
fn greedy_examples() {
    assert!(match_one_to_one(&[], 0.4).is_empty());
    let m = match_one_to_one(&[vec![0.1, 0.2], vec![0.2, 0.5]], 0.4);
    assert_eq!(m.iter().map(|&(i, j, _)| (i, j)).collect::<Vec<_>>(), vec![(0, 0)]);
    let m = match_one_to_one(&[vec![0.1, 0.2], vec![0.2, 0.3]], 0.4);
    assert_eq!(m.iter().map(|&(i, j, _)| (i, j)).collect::<Vec<_>>(), vec![(0, 0), (1, 1)]);
    let m = match_one_to_one(&[vec![0.3, 0.1]], 0.4);
    assert_eq!(m, vec![(0, 1, 0.1)]);
}

#[test]
fn repeatability_examples() {
    let dims = (100, 100);
    let base: Vec<Keypoint> = (0..10).map(|i| kp(10.0 + 8.0 * i as f64, 50.0, 1.0 - 0.01 * i as f64)).collect();
    let id = Homography::identity();
    let p = EvalParams::default();
    assert_eq!(repeatability(&base, &base, &id, dims, dims, &p).unwrap().repeatability, 1.0);
    let mut more = base.clone();
    for k in 0..990 {
        more.push(kp(5.0 + (k % 90) as f64, 5.0 + (k / 90) as f64 * 3.0, 0.001));
    }
    let r = repeatability(&base, &more, &id, dims, dims, &EvalParams { top_k: 2000, ..p }).unwrap();
    assert_eq!(r.n_ref, 10);
    assert_eq!(r.repeatability, 1.0);
    let empty = repeatability(&[], &base, &id, dims, dims, &p).unwrap();
    assert_eq!(empty.repeatability, 0.0);
}

#[test]
fn top_k_applies_before_filtering() {
    let dims = (64, 64);
    // the strongest point lies in the border margin and is dropped after
    // taking the top 1
    let kps = vec![kp(1.0, 1.0, 0.9), kp(30.0, 30.0, 0.5)];
    let p = EvalParams { top_k: 1, ..EvalParams::default() };
    let r = repeatability(&kps, &kps, &Homography::identity(), dims, dims, &p).unwrap();
    assert_eq!((r.n_ref, r.n_tgt, r.repeatability), (0, 0, 0.0));
}

fn arb_instance() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<(f64, f64)>, f64, f64)> {
    let pts = prop::collection::vec((0.0f64..48.0, 0.0f64..48.0), 0..=20);
    (pts.clone(), pts, -6.0f64..6.0, -6.0f64..6.0)
}

fn with_scores(p: &[(f64, f64)], salt: f64) -> Vec<Keypoint> {
    p.iter().enumerate().map(|(i, &(x, y))| kp(x, y, 1.0 / (2.0 + i as f64 + salt))).collect()
}

proptest! {
    #[test]
    fn inverse_round_trip(a in -0.2f64..0.2, b in -0.2f64..0.2, tx in -20.0f64..20.0,
                          px in 0.0f64..200.0, py in 0.0f64..200.0, g in -5e-4f64..5e-4) {
        let h = Homography::new([[1.0 + a, b, tx], [-b, 1.0 - a, 3.0], [g, -g, 1.0]]).unwrap();
        let back = warp_point(&h, warp_point(&h.inverse().unwrap(), (px, py)).unwrap()).unwrap();
        prop_assert!(close(back, (px, py), 1e-6));
    }

    #[test]
    fn self_overlap_is_zero(x in -50.0f64..50.0, y in -50.0f64..50.0, rho in 0.1f64..20.0) {
        prop_assert_eq!(region_overlap_error((x, y), (x, y), &Homography::identity(), rho).unwrap(), 0.0);
    }

    #[test]
    fn greedy_matches_scanning_oracle(errs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..8), 1..8)) {
        let n = errs.iter().map(Vec::len).min().unwrap();
        let errs: Vec<Vec<f64>> = errs.into_iter().map(|r| r[..n].to_vec()).collect();
        let fast: Vec<(usize, usize)> = match_one_to_one(&errs, 0.4).iter().map(|&(i, j, _)| (i, j)).collect();
        prop_assert_eq!(&fast, &greedy_by_scanning(&errs, 0.4));
        let opt = max_cardinality(&errs, 0.4, 0, &mut vec![false; n]);
        prop_assert!(fast.len() <= opt);
        prop_assert!(2 * fast.len() >= opt);
    }

    #[test]
    fn pipeline_count_matches_oracle((a, b, tx, ty) in arb_instance()) {
        let (ra, rb) = (with_scores(&a, 0.0), with_scores(&b, 0.5));
        let h = Homography::translation(tx, ty);
        let p = EvalParams::default();
        let res = repeatability(&ra, &rb, &h, (48, 48), (48, 48), &p).unwrap();
        let (fa, fb) = shared_region_filter(&ra, &rb, &h, (48, 48), (48, 48), p.rho).unwrap();
        let errs: Vec<Vec<f64>> = fa.iter()
            .map(|r| fb.iter().map(|t| region_overlap_error((r.x, r.y), (t.x, t.y), &h, p.rho).unwrap()).collect())
            .collect();
        prop_assert_eq!(res.matches.len(), greedy_by_scanning(&errs, p.eps).len());
        prop_assert!((0.0..=1.0).contains(&res.repeatability));
    }

    #[test]
    fn symmetric_under_translation((a, b, tx, ty) in arb_instance()) {
        let (ra, rb) = (with_scores(&a, 0.0), with_scores(&b, 0.5));
        let h = Homography::translation(tx, ty);
        let p = EvalParams::default();
        let fwd = repeatability(&ra, &rb, &h, (48, 48), (48, 48), &p).unwrap();
        let bwd = repeatability(&rb, &ra, &h.inverse().unwrap(), (48, 48), (48, 48), &p).unwrap();
        prop_assert_eq!(fwd.matches.len(), bwd.matches.len());
        prop_assert_eq!(fwd.repeatability, bwd.repeatability);
    }

    #[test]
    fn monotone_in_eps((a, b, tx, ty) in arb_instance(), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
        let (lo, hi) = (e1.min(e2), e1.max(e2));
        let (ra, rb) = (with_scores(&a, 0.0), with_scores(&b, 0.5));
        let h = Homography::translation(tx, ty);
        let r = |eps| repeatability(&ra, &rb, &h, (48, 48), (48, 48), &EvalParams { eps, ..EvalParams::default() }).unwrap().repeatability;
        prop_assert!(r(lo) <= r(hi));
    }
}
