use super::grid::power_to_db;
use super::mel::mel_spectrogram;
use super::stft::StftParams;
use super::DspError;
use crate::audio_io::AudioClip;
use crate::nn::Tensor;

/// Cepstral coefficients, `[n_mfcc × n_frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    pub coeffs: Tensor,
    pub n_mfcc: usize,
}

/// First `n_out` rows of the orthonormal DCT-II matrix of size `n`.
pub fn dct_matrix(n_out: usize, n: usize) -> Tensor {
    let data = (0..n_out)
        .flat_map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n).map(move |i| {
                (scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()) as f32
            })
        })
        .collect();
    Tensor::new(vec![n_out, n], data).expect("consistent shape")
}

/// DCT-II along the band axis of a `[n_bands × n_frames]` grid.
pub fn dct_rows(grid: &Tensor, n_out: usize) -> Tensor {
    use crate::nn::Float;
    let [n, frames] = *grid.shape() else {
        panic!("expected a 2-D grid, got {:?}", grid.shape());
    };
    let d = dct_matrix(n_out, n);
    let mut out = vec![0.0f32; n_out * frames];
    f32::gemm(n_out, n, frames, 1.0, d.data(), false, grid.data(), false, 0.0, &mut out);
    Tensor::new(vec![n_out, frames], out).expect("consistent shape")
}

/// MFCCs of the decibel mel spectrogram (band range `0..sample_rate/2`, 80 dB floor).
pub fn mfcc(clip: &AudioClip, p: &StftParams, n_mels: usize, n_mfcc: usize) -> Result<MfccMatrix, DspError> {
    if n_mfcc == 0 || n_mfcc > n_mels {
        return Err(DspError::BadParams(format!("need 0 < n_mfcc ≤ n_mels, got {n_mfcc} > {n_mels}")));
    }
    let mel = mel_spectrogram(clip, p, n_mels, 0.0, clip.sample_rate() as f64 / 2.0)?;
    let db = power_to_db(&mel.data, super::DEFAULT_TOP_DB);
    Ok(MfccMatrix {
        coeffs: dct_rows(&db, n_mfcc),
        n_mfcc,
    })
}
