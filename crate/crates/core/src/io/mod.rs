//! File formats: netpbm images, keypoint CSV, homography and kernel text,
//! binary model files and dataset manifests.

mod manifest;
mod modelfile;
mod netpbm;
mod text;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use modelfile::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use netpbm::{decode_image, encode_pgm, encode_ppm, read_image, write_image, BitDepth};
pub use text::{
    format_homography, format_kernel, format_keypoints, parse_homography, parse_kernel, parse_keypoints,
    read_homography, read_kernel, read_keypoints, write_homography, write_kernel, write_keypoints,
};
