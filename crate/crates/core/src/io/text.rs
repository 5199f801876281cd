//! Line-oriented text formats: keypoint CSV, 3×3 homographies, blur kernels.
//!
//! Writers print reals in shortest round-trip form, so reading back what
//! was written reproduces every value exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::blursynth::BlurKernel;
use crate::error::{Error, Result};
use crate::evalkit::Homography;
use crate::model::Keypoint;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Content before any `#`, trimmed.
fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Parses `x,y[,score]` lines; blank lines and `#` comments are ignored and
/// a missing score defaults to 1. `source` labels errors.
pub fn parse_keypoints(text: &str, source: &Path) -> Result<Vec<Keypoint>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source.to_path_buf(), line: i + 1, msg };
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| err(format!("bad number {:?}: {e}", f.trim()))))
            .collect::<Result<Vec<_>>>()?;
        let (x, y, score) = match vals[..] {
            [x, y] => (x, y, 1.0),
            [x, y, s] => (x, y, s),
            _ => return Err(err(format!("expected 2 or 3 fields, found {}", vals.len()))),
        };
        if !(x.is_finite() && y.is_finite() && score.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        out.push(Keypoint::new(x, y, score));
    }
    Ok(out)
}

pub fn format_keypoints(kps: &[Keypoint]) -> String {
    let mut s = String::from("# x,y,score\n");
    for k in kps {
        writeln!(s, "{},{},{}", k.x, k.y, k.score).expect("writing to a String");
    }
    s
}

pub fn read_keypoints(path: impl AsRef<Path>) -> Result<Vec<Keypoint>> {
    let path = path.as_ref();
    parse_keypoints(&read_text(path)?, path)
}

pub fn write_keypoints(path: impl AsRef<Path>, kps: &[Keypoint]) -> Result<()> {
    write_text(path.as_ref(), &format_keypoints(kps))
}

fn parse_reals(text: &str, kind: &'static str) -> Result<Vec<f64>> {
    text.lines()
        .flat_map(|l| strip_comment(l).split_whitespace())
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format { kind, msg: format!("bad number {t:?}: {e}") }))
        .collect()
}

/// Nine whitespace-separated reals, row-major. The matrix is scaled so its
/// bottom-right entry is 1 when that entry is nonzero.
pub fn parse_homography(text: &str) -> Result<Homography> {
    let v = parse_reals(text, "homography")?;
    if v.len() != 9 {
        return Err(Error::Format { kind: "homography", msg: format!("expected 9 values, found {}", v.len()) });
    }
    Homography::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
}

pub fn format_homography(h: &Homography) -> String {
    h.matrix().iter().map(|r| format!("{} {} {}\n", r[0], r[1], r[2])).collect()
}

pub fn read_homography(path: impl AsRef<Path>) -> Result<Homography> {
    parse_homography(&read_text(path.as_ref())?)
}

pub fn write_homography(path: impl AsRef<Path>, h: &Homography) -> Result<()> {
    write_text(path.as_ref(), &format_homography(h))
}

/// One kernel row per line.
pub fn format_kernel(k: &BlurKernel) -> String {
    let n = k.size();
    k.weights()
        .chunks_exact(n)
        .map(|row| row.iter().map(f64::to_string).collect::<Vec<_>>().join(" ") + "\n")
        .collect()
}

pub fn parse_kernel(text: &str) -> Result<BlurKernel> {
    let v = parse_reals(text, "kernel")?;
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(Error::Format { kind: "kernel", msg: format!("{} values do not form a square", v.len()) });
    }
    BlurKernel::new(n, v)
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<BlurKernel> {
    parse_kernel(&read_text(path.as_ref())?)
}

pub fn write_kernel(path: impl AsRef<Path>, k: &BlurKernel) -> Result<()> {
    write_text(path.as_ref(), &format_kernel(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blursynth::{random_kernel, BlurLevel};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn src() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn keypoint_lines() {
        let k = parse_keypoints("10.5,20.0,0.9\n", src()).unwrap();
        assert_eq!(k, vec![Keypoint::new(10.5, 20.0, 0.9)]);
        let k = parse_keypoints("# header\n\n3,4   # trailing\n", src()).unwrap();
        assert_eq!(k, vec![Keypoint::new(3.0, 4.0, 1.0)]);
    }

    #[test]
    fn keypoint_errors_carry_line_numbers() {
        match parse_keypoints("1,2\n\n3;4\n", src()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_keypoints("1,2,3,4", src()).is_err());
        assert!(parse_keypoints("1,nan", src()).is_err());
        assert!(parse_keypoints("1", src()).is_err());
    }

    #[test]
    fn six_decimals_survive() {
        let kps = vec![Keypoint::new(12.345678, 0.000001, 0.999999)];
        assert_eq!(parse_keypoints(&format_keypoints(&kps), src()).unwrap(), kps);
    }

    #[test]
    fn homography_text() {
        assert_eq!(parse_homography("1 0 0 0 1 0 0 0 1").unwrap(), Homography::identity());
        assert_eq!(parse_homography("1 0 5\n0 1 -3\n0 0 1\n").unwrap(), Homography::translation(5.0, -3.0));
        assert_eq!(parse_homography("2 0 0 0 2 0 0 0 2").unwrap(), Homography::identity());
        assert!(matches!(parse_homography("1 0 0 0 1 0 0 0"), Err(Error::Format { .. })));
        assert!(matches!(parse_homography("1 0 0 0 0 0 0 0 1"), Err(Error::Geometry(_))));
        assert!(parse_homography("1 0 0 0 1 0 0 0 x").is_err());
    }

    #[test]
    fn kernel_text_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for level in BlurLevel::ALL {
            let k = random_kernel(&mut rng, &level.spec()).unwrap();
            assert_eq!(parse_kernel(&format_kernel(&k)).unwrap(), k);
        }
        assert!(parse_kernel("0.5 0.5").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kp = dir.path().join("k.csv");
        let kps = vec![Keypoint::new(1.0, 2.0, 0.5), Keypoint::new(3.25, 4.0, 1.0)];
        write_keypoints(&kp, &kps).unwrap();
        assert_eq!(read_keypoints(&kp).unwrap(), kps);
        let hp = dir.path().join("h.txt");
        let h = Homography::new([[1.1, 0.2, 3.0], [-0.1, 0.9, 4.5], [1e-4, 2e-4, 1.0]]).unwrap();
        write_homography(&hp, &h).unwrap();
        assert_eq!(read_homography(&hp).unwrap(), h);
        assert!(read_keypoints(dir.path().join("none.csv")).is_err());
    }

    proptest! {
        #[test]
        fn keypoint_csv_is_lossless(pts in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4, 0f64..1.0), 0..30)) {
            let kps: Vec<Keypoint> = pts.iter().map(|&(x, y, s)| Keypoint::new(x, y, s)).collect();
            prop_assert_eq!(parse_keypoints(&format_keypoints(&kps), src()).unwrap(), kps);
        }

        #[test]
        fn homography_text_is_lossless(a in -2.0f64..2.0, b in -2.0f64..2.0, tx in -50.0f64..50.0, p in -1e-3f64..1e-3) {
            let h = Homography::new([[1.0 + a * 0.1, b * 0.1, tx], [b * 0.05, 1.0 - a * 0.1, -tx], [p, -p, 1.0]]).unwrap();
            prop_assert_eq!(parse_homography(&format_homography(&h)).unwrap(), h);
        }
    }
}
