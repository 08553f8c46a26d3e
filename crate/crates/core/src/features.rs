//! Fixed feature pipelines feeding the models: audio → normalized square image.

use std::path::Path;

use crate::audio_io::{self, resample, AudioClip, AudioIoError, CANONICAL_SAMPLE_RATE};
use crate::dsp::{
    self, db_to_power, mel_filterbank, mel_spectrogram, mel_to_linear, mfcc, normalize_01, power_to_db,
    resize_bilinear, DspError, StftParams,
};
use crate::nn::Tensor;

pub const DETECTOR_SIZE: usize = 64;
pub const SPECTROGRAM_SIZE: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error(transparent)]
    Audio(#[from] AudioIoError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("silent audio: features are constant")]
    Silent,
    #[error("unsupported feature file {0}")]
    UnsupportedFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// 13 MFCCs per frame.
    Mfcc,
    /// Decibel mel spectrogram, 128 bands.
    Mel,
}

impl FeatureKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mfcc" => Some(Self::Mfcc),
            "mel" => Some(Self::Mel),
            _ => None,
        }
    }
}

/// A `[1 × size × size]` image in `[0, 1]` plus what is needed to undo the
/// normalization of a mel image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub image: Tensor,
    /// Shape of the grid before resizing, `[rows, frames]`.
    pub raw_shape: [usize; 2],
    pub db_min: f32,
    pub db_max: f32,
    /// Power that 0 dB stands for.
    pub reference: f32,
}

fn canonical(clip: &AudioClip) -> Result<AudioClip, FeatureError> {
    Ok(resample(clip, CANONICAL_SAMPLE_RATE)?)
}

/// Unresized feature grid, `[13 × frames]` MFCCs or `[128 × frames]` dB mel.
pub fn raw_features(clip: &AudioClip, kind: FeatureKind) -> Result<Tensor, FeatureError> {
    let clip = canonical(clip)?;
    let p = StftParams::default();
    Ok(match kind {
        FeatureKind::Mfcc => mfcc(&clip, &p, dsp::DEFAULT_N_MELS, dsp::DEFAULT_N_MFCC)?.coeffs,
        FeatureKind::Mel => {
            let mel = mel_spectrogram(&clip, &p, dsp::DEFAULT_N_MELS, dsp::DEFAULT_FMIN, dsp::DEFAULT_FMAX)?;
            power_to_db(&mel.data, dsp::DEFAULT_TOP_DB)
        }
    })
}

/// Resizes a 2-D grid to `[1 × size × size]` and min-max normalizes it.
/// A constant grid is rejected as [`FeatureError::Silent`].
pub fn to_image(grid: &Tensor, size: usize) -> Result<Tensor, FeatureError> {
    let img = normalize_01(&resize_bilinear(grid, size, size));
    if img.data().iter().all(|&v| v == 0.0) {
        return Err(FeatureError::Silent);
    }
    Ok(img.reshape(&[1, size, size]).expect("same element count"))
}

/// Detector input: MFCC image, `[1 × 64 × 64]`.
pub fn detector_input(clip: &AudioClip) -> Result<Tensor, FeatureError> {
    to_image(&raw_features(clip, FeatureKind::Mfcc)?, DETECTOR_SIZE)
}

/// Severity / translator input: dB mel image, `[1 × size × size]`.
pub fn spectrogram_input(clip: &AudioClip, size: usize) -> Result<FeatureImage, FeatureError> {
    let clip = canonical(clip)?;
    let p = StftParams::default();
    let mel = mel_spectrogram(&clip, &p, dsp::DEFAULT_N_MELS, dsp::DEFAULT_FMIN, dsp::DEFAULT_FMAX)?;
    let reference = mel.data.data().iter().copied().fold(0.0f32, f32::max).max(dsp::AMIN);
    let db = power_to_db(&mel.data, dsp::DEFAULT_TOP_DB);
    let (db_min, db_max) = db
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let image = to_image(&db, size)?;
    Ok(FeatureImage {
        image,
        raw_shape: [db.shape()[0], db.shape()[1]],
        db_min,
        db_max,
        reference,
    })
}

/// Features for a file: WAVs go through the audio pipeline for `kind`;
/// DYST files are taken as precomputed 2-D grids and only resized and
/// normalized.
pub fn file_features(path: &Path, kind: FeatureKind, size: usize) -> Result<Tensor, FeatureError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("wav") => {
            let clip = audio_io::load_wav(path)?;
            match kind {
                FeatureKind::Mfcc => to_image(&raw_features(&clip, kind)?, size),
                FeatureKind::Mel => Ok(spectrogram_input(&clip, size)?.image),
            }
        }
        Some("dyst") => {
            let t = audio_io::load_tensor(path)?;
            let grid = match *t.shape() {
                [h, w] | [1, h, w] => t.reshape(&[h, w]).expect("same element count"),
                ref s => return Err(FeatureError::UnsupportedFile(format!("{}: shape {s:?} is not 2-D", path.display()))),
            };
            to_image(&grid, size)
        }
        _ => Err(FeatureError::UnsupportedFile(path.display().to_string())),
    }
}

/// Maps a normalized mel image back to a waveform: undo the normalization,
/// resize to the original grid, dB → power → linear power, then Griffin-Lim
/// on the magnitude.
pub fn image_to_audio(image: &Tensor, meta: &FeatureImage, n_iters: usize) -> Result<AudioClip, FeatureError> {
    let [rows, frames] = meta.raw_shape;
    let span = meta.db_max - meta.db_min;
    let db = image.map(|v| meta.db_min + v * span);
    let db = resize_bilinear(&db, rows, frames);
    let db = db.reshape(&[rows, frames]).expect("same element count");
    let power = db_to_power(&db, meta.reference);
    let p = StftParams::default();
    let fb = mel_filterbank(rows, p.n_fft, CANONICAL_SAMPLE_RATE, dsp::DEFAULT_FMIN, dsp::DEFAULT_FMAX)?;
    let linear = mel_to_linear(&power, &fb)?;
    let mag = linear.map(f32::sqrt);
    Ok(dsp::griffin_lim(&mag, &p, n_iters, dsp::PhaseInit::Zero, CANONICAL_SAMPLE_RATE)?)
}
