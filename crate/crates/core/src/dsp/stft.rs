use num_complex::{Complex32, Complex64};

use super::fft::Fft;
use super::DspError;
use crate::audio_io::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StftParams {
    /// Window and FFT length; a power of two.
    pub n_fft: usize,
    /// Samples between successive frames; `0 < hop ≤ n_fft`.
    pub hop: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self, DspError> {
        let p = Self {
            n_fft,
            hop,
            window: Window::Hann,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(DspError::BadParams(format!("n_fft {} is not a power of two ≥ 2", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(DspError::BadParams(format!(
                "hop {} outside (0, {}]",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Periodic window of length `n_fft`.
    pub fn window_values(&self) -> Vec<f64> {
        match self.window {
            Window::Hann => (0..self.n_fft)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / self.n_fft as f64).cos())
                .collect(),
        }
    }
}

/// Non-negative-frequency STFT coefficients, `[n_bins × n_frames]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub n_bins: usize,
    pub n_frames: usize,
    pub data: Vec<Complex32>,
}

impl ComplexSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> Complex32 {
        self.data[bin * self.n_frames + frame]
    }

    /// `|X|` as a row-major grid.
    pub fn magnitude(&self) -> Vec<f32> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    /// `|X|²` as a row-major grid.
    pub fn power(&self) -> Vec<f32> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Index into a signal of length `len` with numpy-style "reflect" extension
/// (edge sample not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// STFT of raw samples with centered frames and reflect padding.
pub(crate) fn stft_samples(samples: &[f64], p: &StftParams, plan: &Fft) -> ComplexSpectrogram {
    let n_fft = p.n_fft;
    let pad = (n_fft / 2) as isize;
    let n_frames = 1 + samples.len() / p.hop;
    let n_bins = p.n_bins();
    let window = p.window_values();
    let mut data = vec![Complex32::new(0.0, 0.0); n_bins * n_frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for t in 0..n_frames {
        let start = (t * p.hop) as isize - pad;
        for (n, slot) in buf.iter_mut().enumerate() {
            let x = samples[reflect_index(start + n as isize, samples.len())];
            *slot = Complex64::new(x * window[n], 0.0);
        }
        plan.forward(&mut buf);
        for (k, c) in buf.iter().take(n_bins).enumerate() {
            data[k * n_frames + t] = Complex32::new(c.re as f32, c.im as f32);
        }
    }
    ComplexSpectrogram {
        n_bins,
        n_frames,
        data,
    }
}

/// Short-time Fourier transform.
///
/// Frame `t` is centered on sample `t·hop` (the signal is reflect-padded by
/// `n_fft/2` on both sides) and Hann-windowed. Clips shorter than `n_fft` are
/// zero-padded to `n_fft` first.
pub fn stft(clip: &AudioClip, p: &StftParams) -> Result<ComplexSpectrogram, DspError> {
    p.validate()?;
    if clip.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let mut samples: Vec<f64> = clip.samples().iter().map(|&s| s as f64).collect();
    if samples.len() < p.n_fft {
        samples.resize(p.n_fft, 0.0);
    }
    Ok(stft_samples(&samples, p, &Fft::new(p.n_fft)))
}

/// Inverse STFT by windowed overlap-add, normalized by the summed squared
/// window. Returns `length` samples, defaulting to `hop · (n_frames − 1)`.
pub fn istft(spec: &ComplexSpectrogram, p: &StftParams, length: Option<usize>) -> Result<Vec<f32>, DspError> {
    p.validate()?;
    Ok(istft_with(spec, p, &Fft::new(p.n_fft), length)
        .into_iter()
        .map(|v| v as f32)
        .collect())
}

pub(crate) fn istft_with(spec: &ComplexSpectrogram, p: &StftParams, plan: &Fft, length: Option<usize>) -> Vec<f64> {
    let n_fft = p.n_fft;
    let n_frames = spec.n_frames;
    let window = p.window_values();
    let total = n_fft + p.hop * n_frames.saturating_sub(1);
    let mut acc = vec![0.0f64; total];
    let mut wsum = vec![0.0f64; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for t in 0..n_frames {
        for k in 0..n_fft {
            // rebuild the full spectrum from its Hermitian half
            let (bin, conj) = if k < spec.n_bins { (k, false) } else { (n_fft - k, true) };
            let c = spec.at(bin, t);
            let c = Complex64::new(c.re as f64, c.im as f64);
            buf[k] = if conj { c.conj() } else { c };
        }
        plan.inverse(&mut buf);
        let off = t * p.hop;
        for n in 0..n_fft {
            acc[off + n] += buf[n].re * window[n];
            wsum[off + n] += window[n] * window[n];
        }
    }
    let pad = n_fft / 2;
    let len = length.unwrap_or(p.hop * n_frames.saturating_sub(1));
    (0..len)
        .map(|i| {
            let j = i + pad;
            if j < total && wsum[j] > 1e-10 {
                acc[j] / wsum[j]
            } else {
                0.0
            }
        })
        .collect()
}
