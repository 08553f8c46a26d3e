//! Speech feature extraction and its approximate inverse.

mod fft;
mod griffin_lim;
mod grid;
mod mel;
mod mfcc;
mod stft;

pub use fft::Fft;
pub use griffin_lim::{griffin_lim, spectral_convergence, PhaseInit};
pub use grid::{db_to_power, normalize_01, power_to_db, resize_bilinear, AMIN};
pub use mel::{hz_to_mel, mel_centers, mel_filterbank, mel_spectrogram, mel_to_hz, mel_to_linear};
pub use mfcc::{dct_matrix, dct_rows, mfcc, MfccMatrix};
pub use stft::{istft, stft, ComplexSpectrogram, StftParams, Window};

use crate::nn::Tensor;

pub const DEFAULT_N_MELS: usize = 128;
pub const DEFAULT_N_MFCC: usize = 13;
pub const DEFAULT_FMIN: f64 = 0.0;
pub const DEFAULT_FMAX: f64 = 8000.0;
pub const DEFAULT_TOP_DB: f32 = 80.0;
pub const DEFAULT_GRIFFIN_LIM_ITERS: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("empty signal")]
    EmptySignal,
    #[error("bad frequency range: {0}")]
    BadRange(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected a {expected} spectrogram, got {got:?}")]
    WrongScale { expected: &'static str, got: Scale },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    LinearPower,
    MelPower,
    Decibel,
    Normalized,
}

/// Time-frequency grid, `[n_bins × n_frames]`, tagged with how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Tensor,
    pub scale: Scale,
    pub params: StftParams,
    /// Band count when the grid is mel-domain.
    pub n_mels: Option<usize>,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.data.shape()[1]
    }
}

/// Decibel conversion referenced to the spectrogram maximum (which maps to 0 dB).
pub fn amplitude_to_db(s: &Spectrogram, top_db: f32) -> Result<Spectrogram, DspError> {
    if !matches!(s.scale, Scale::LinearPower | Scale::MelPower) {
        return Err(DspError::WrongScale {
            expected: "power",
            got: s.scale,
        });
    }
    Ok(Spectrogram {
        data: power_to_db(&s.data, top_db),
        scale: Scale::Decibel,
        ..s.clone()
    })
}
