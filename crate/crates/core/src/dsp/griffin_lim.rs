use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fft::Fft;
use super::stft::{istft_with, stft_samples, ComplexSpectrogram, StftParams};
use super::DspError;
use crate::audio_io::AudioClip;
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseInit {
    #[default]
    Zero,
    Random { seed: u64 },
}

fn magnitude_dims(mag: &Tensor, p: &StftParams) -> Result<(usize, usize), DspError> {
    match *mag.shape() {
        [bins, frames] if bins == p.n_bins() => Ok((bins, frames)),
        ref s => Err(DspError::ShapeMismatch(format!(
            "magnitude {s:?} does not have {} bins",
            p.n_bins()
        ))),
    }
}

/// Griffin–Lim phase recovery.
///
/// Starting from `init` phases, alternates overlap-add synthesis with
/// re-analysis, keeping the re-analysed phase and restoring the target
/// magnitude. The result has `hop · (n_frames − 1)` samples.
pub fn griffin_lim(
    mag: &Tensor,
    p: &StftParams,
    n_iters: usize,
    init: PhaseInit,
    sample_rate: u32,
) -> Result<AudioClip, DspError> {
    p.validate()?;
    let (n_bins, n_frames) = magnitude_dims(mag, p)?;
    if mag.data().iter().any(|&m| !(m >= 0.0)) {
        return Err(DspError::BadParams("magnitude must be non-negative".into()));
    }
    let plan = Fft::new(p.n_fft);
    let len = p.hop * n_frames.saturating_sub(1);
    let mut phase: Vec<Complex32> = match init {
        PhaseInit::Zero => vec![Complex32::new(1.0, 0.0); mag.len()],
        PhaseInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..mag.len())
                .map(|_| Complex32::from_polar(1.0, rng.random_range(0.0..std::f32::consts::TAU)))
                .collect()
        }
    };
    let synth = |phase: &[Complex32]| {
        let spec = ComplexSpectrogram {
            n_bins,
            n_frames,
            data: mag.data().iter().zip(phase).map(|(&m, &ph)| ph * m).collect(),
        };
        istft_with(&spec, p, &plan, Some(len))
    };
    for _ in 0..n_iters {
        let y = synth(&phase);
        if y.is_empty() {
            break;
        }
        let rebuilt = stft_samples(&y, p, &plan);
        for (ph, c) in phase.iter_mut().zip(&rebuilt.data) {
            let n = c.norm();
            *ph = if n > 1e-12 { c / n } else { Complex32::new(1.0, 0.0) };
        }
    }
    let y = synth(&phase);
    AudioClip::new(y.into_iter().map(|v| v as f32).collect(), sample_rate)
        .map_err(|e| DspError::BadParams(e.to_string()))
}

/// `‖ |STFT(y)| − mag ‖₂ / ‖mag‖₂`.
pub fn spectral_convergence(mag: &Tensor, clip: &AudioClip, p: &StftParams) -> Result<f64, DspError> {
    let (n_bins, n_frames) = magnitude_dims(mag, p)?;
    let samples: Vec<f64> = clip.samples().iter().map(|&s| s as f64).collect();
    if samples.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let re = stft_samples(&samples, p, &Fft::new(p.n_fft));
    let frames = n_frames.min(re.n_frames);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for k in 0..n_bins {
        for t in 0..n_frames {
            let target = mag.data()[k * n_frames + t] as f64;
            let got = if t < frames { re.at(k, t).norm() as f64 } else { 0.0 };
            num += (got - target).powi(2);
            den += target * target;
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}
