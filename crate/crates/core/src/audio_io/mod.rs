//! Audio decoding, resampling, and the on-disk tensor and image formats.

mod dyst;
mod image;
mod wav;

use std::path::PathBuf;

pub use dyst::{decode_tensor, encode_tensor, load_tensor, save_tensor};
pub use image::{encode_pgm, encode_ppm, save_image_gray, save_image_rgb};
pub use wav::{decode_wav, encode_wav_pcm16, load_wav, resample, AudioClip, CANONICAL_SAMPLE_RATE};

#[derive(Debug, thiserror::Error)]
pub enum AudioIoError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("data chunk shorter than declared ({declared} bytes declared, {available} present)")]
    TruncatedData { declared: usize, available: usize },
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("unsupported DYST version {0}")]
    UnsupportedVersion(u32),
    #[error("declared shape does not match payload: {0}")]
    ShapeOverflow(String),
    #[error("pixel value {0} outside [0, 1]")]
    ValueOutOfRange(f32),
    #[error("expected {expected}, got shape {shape:?}")]
    BadShape { expected: &'static str, shape: Vec<usize> },
    #[error("invalid sample rate {0}")]
    BadSampleRate(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, AudioIoError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => AudioIoError::MissingFile(path.to_path_buf()),
        _ => AudioIoError::Io(e),
    })
}
