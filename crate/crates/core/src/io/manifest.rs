//! Line-oriented dataset index.
//!
//! Each non-comment line names a sharp image, its blurred counterpart and
//! optionally a keypoint file, separated by whitespace. Relative paths are
//! resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use super::netpbm::read_image;
use super::text::read_keypoints;
use crate::error::{Error, Result};
use crate::supervision::{detect_reference_keypoints, TrainingSample};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sharp: PathBuf,
    pub blurred: PathBuf,
    pub keypoints: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str, root: impl Into<PathBuf>, source: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&f.len()) {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected `sharp blurred [keypoints]`, found {} fields", f.len()),
                });
            }
            entries.push(ManifestEntry {
                sharp: f[0].into(),
                blurred: f[1].into(),
                keypoints: f.get(2).map(PathBuf::from),
            });
        }
        Ok(DatasetManifest { root: root.into(), entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root, path)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                let mut line = format!("{} {}", e.sharp.display(), e.blurred.display());
                if let Some(k) = &e.keypoints {
                    line += &format!(" {}", k.display());
                }
                line + "\n"
            })
            .collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    /// Reads every pair. Entries without a keypoint file are labelled by
    /// the reference detector on the sharp image (at most `max_kpts`).
    pub fn load_samples(&self, max_kpts: usize) -> Result<Vec<TrainingSample>> {
        self.entries
            .iter()
            .map(|e| {
                let sharp = read_image(self.resolve(&e.sharp))?;
                let blurred = read_image(self.resolve(&e.blurred))?;
                let kps = match &e.keypoints {
                    Some(k) => read_keypoints(self.resolve(k))?,
                    None => detect_reference_keypoints(&sharp, max_kpts)?,
                };
                TrainingSample::new(sharp, blurred, kps).map_err(|err| match err {
                    Error::Dimension(m) => Error::Dimension(format!("{}: {m}", e.sharp.display())),
                    other => other,
                })
            })
            .collect()
    }
}
