use super::stft::{stft, StftParams};
use super::{DspError, Scale, Spectrogram};
use crate::audio_io::AudioClip;
use crate::nn::{Float, Tensor};

/// HTK mel scale: `2595 · log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels` filters, i.e. the interior
/// points of `n_mels + 2` mel-equispaced points on `[fmin, fmax]`.
pub fn mel_centers(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    mel_points(n_mels, fmin, fmax)[1..=n_mels].to_vec()
}

fn mel_points(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Unit-peak triangular filters, `[n_mels × (n_fft/2 + 1)]`.
///
/// Filter `m` rises from point `m` to its peak at point `m+1` and falls to
/// zero at point `m+2`, evaluated at each FFT bin's center frequency.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Result<Tensor, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(DspError::BadRange(format!(
            "need 0 ≤ fmin < fmax ≤ {nyquist}, got fmin={fmin} fmax={fmax}"
        )));
    }
    if n_mels < 2 {
        return Err(DspError::BadRange(format!("n_mels must be ≥ 2, got {n_mels}")));
    }
    let n_bins = n_fft / 2 + 1;
    let pts = mel_points(n_mels, fmin, fmax);
    let mut fb = vec![0.0f32; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (pts[m], pts[m + 1], pts[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            fb[m * n_bins + k] = up.min(down).max(0.0) as f32;
        }
    }
    Ok(Tensor::new(vec![n_mels, n_bins], fb).expect("consistent shape"))
}

/// Filterbank applied to the power STFT: `[n_mels × n_frames]`.
pub fn mel_spectrogram(
    clip: &AudioClip,
    p: &StftParams,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Spectrogram, DspError> {
    let fb = mel_filterbank(n_mels, p.n_fft, clip.sample_rate(), fmin, fmax)?;
    let spec = stft(clip, p)?;
    let power = Tensor::new(vec![spec.n_bins, spec.n_frames], spec.power()).expect("consistent shape");
    let mut mel = vec![0.0f32; n_mels * spec.n_frames];
    f32::gemm(n_mels, spec.n_bins, spec.n_frames, 1.0, fb.data(), false, power.data(), false, 0.0, &mut mel);
    for v in &mut mel {
        // rounding in the product can leave tiny negatives
        *v = v.max(0.0);
    }
    Ok(Spectrogram {
        data: Tensor::new(vec![n_mels, spec.n_frames], mel).expect("consistent shape"),
        scale: Scale::MelPower,
        params: *p,
        n_mels: Some(n_mels),
        sample_rate: clip.sample_rate(),
    })
}

/// Approximate inverse of the filterbank: each band is first divided by its
/// filter area (turning band energy into mean bin power), then spread back
/// with `Fᵀ` and each bin divided by its filterbank column sum. A constant
/// power spectrum is recovered exactly; bins no filter covers come out as 0.
pub fn mel_to_linear(mel: &Tensor, filterbank: &Tensor) -> Result<Tensor, DspError> {
    let [n_mels, n_bins] = *filterbank.shape() else {
        return Err(DspError::ShapeMismatch(format!("filterbank shape {:?}", filterbank.shape())));
    };
    let [rows, n_frames] = *mel.shape() else {
        return Err(DspError::ShapeMismatch(format!("mel shape {:?}", mel.shape())));
    };
    if rows != n_mels {
        return Err(DspError::ShapeMismatch(format!(
            "mel has {rows} bands, filterbank has {n_mels}"
        )));
    }
    let fb = filterbank.data();
    let col_sums: Vec<f32> = (0..n_bins).map(|k| (0..n_mels).map(|m| fb[m * n_bins + k]).sum()).collect();
    let mut per_bin = mel.data().to_vec();
    for (m, row) in per_bin.chunks_mut(n_frames).enumerate() {
        let area: f32 = fb[m * n_bins..(m + 1) * n_bins].iter().sum();
        for v in row {
            *v = if area > 0.0 { *v / area } else { 0.0 };
        }
    }
    let mut lin = vec![0.0f32; n_bins * n_frames];
    f32::gemm(n_bins, n_mels, n_frames, 1.0, fb, true, &per_bin, false, 0.0, &mut lin);
    for (k, row) in lin.chunks_mut(n_frames).enumerate() {
        let s = col_sums[k];
        for v in row {
            *v = if s > 0.0 { (*v / s).max(0.0) } else { 0.0 };
        }
    }
    Ok(Tensor::new(vec![n_bins, n_frames], lin).expect("consistent shape"))
}
