//! Seeded synthetic datasets with known answers, for smoke tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::AudioClip;
use crate::nn::Tensor;
use crate::train::Pair;

/// Class 0: images near 0.1, class 1: images near 0.9 (±0.05 noise).
/// Labels alternate 0, 1, 0, 1, …
pub fn separable_images(n: usize, size: usize, seed: u64) -> Vec<(Tensor, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let level = if label == 0 { 0.1 } else { 0.9 };
            let x = Tensor::from_fn(&[1, size, size], |_| level + rng.random_range(-0.05..0.05));
            (x, label)
        })
        .collect()
}

fn gaussian_blob(size: usize, cy: f32, cx: f32, sigma: f32, amp: f32, out: &mut [f32]) {
    for i in 0..size {
        for j in 0..size {
            let d2 = (i as f32 - cy).powi(2) + (j as f32 - cx).powi(2);
            out[i * size + j] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
}

/// Four-class blob task: one bright blob in quadrant `label` (0 = top-left,
/// 1 = top-right, 2 = bottom-left, 3 = bottom-right) on a noisy background.
/// Blob position jitters within its quadrant.
pub fn blob_quadrants(n: usize, size: usize, seed: u64) -> Vec<(Tensor, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = size as f32 / 4.0;
    (0..n)
        .map(|i| {
            let label = i % 4;
            let (row, col) = (label / 2, label % 2);
            let cy = q * (1 + 2 * row) as f32 + rng.random_range(-q / 2.0..q / 2.0);
            let cx = q * (1 + 2 * col) as f32 + rng.random_range(-q / 2.0..q / 2.0);
            let mut img: Vec<f32> = (0..size * size).map(|_| rng.random_range(0.0..0.3)).collect();
            gaussian_blob(size, cy, cx, size as f32 / 10.0, 0.7, &mut img);
            for v in &mut img {
                *v = v.clamp(0.0, 1.0);
            }
            (Tensor::new(vec![1, size, size], img).expect("consistent shape"), label)
        })
        .collect()
}

/// Smooth random image: a few Gaussian blobs on a 0.2 background, peaks
/// scaled into `[0.2, 0.9]`.
pub fn smooth_image(size: usize, blobs: usize, sigma: (f32, f32), rng: &mut impl Rng) -> Tensor {
    let mut img = vec![0.0f32; size * size];
    for _ in 0..blobs {
        let cy = rng.random_range(0.0..size as f32);
        let cx = rng.random_range(0.0..size as f32);
        let s = rng.random_range(sigma.0..sigma.1);
        let a = rng.random_range(0.3..1.0);
        gaussian_blob(size, cy, cx, s, a, &mut img);
    }
    let max = img.iter().copied().fold(0.0f32, f32::max).max(1e-6);
    Tensor::new(vec![1, size, size], img.iter().map(|v| 0.2 + 0.7 * v / max).collect()).expect("consistent shape")
}

/// `radius`-box blur with edge clamping.
pub fn box_blur(img: &Tensor, radius: usize) -> Tensor {
    let (h, w) = (img.shape()[img.shape().len() - 2], img.shape()[img.shape().len() - 1]);
    let src = img.data();
    let r = radius as isize;
    Tensor::from_fn(img.shape(), |k| {
        let (i, j) = ((k / w) as isize, (k % w) as isize);
        let mut acc = 0.0;
        let mut n = 0.0;
        for di in -r..=r {
            for dj in -r..=r {
                let y = (i + di).clamp(0, h as isize - 1) as usize;
                let x = (j + dj).clamp(0, w as isize - 1) as usize;
                acc += src[y * w + x];
                n += 1.0;
            }
        }
        acc / n
    })
}

/// Parameters of a family of deblurring pairs `(blur(x), x)`.
#[derive(Debug, Clone, Copy)]
pub struct BlurTask {
    pub blobs: usize,
    pub sigma: (f32, f32),
    pub radius: usize,
}

impl BlurTask {
    /// The source distribution used for pretraining.
    pub const SOURCE: BlurTask = BlurTask {
        blobs: 3,
        sigma: (2.0, 5.0),
        radius: 2,
    };
    /// A shifted target distribution: more, sharper blobs.
    pub const SHIFTED: BlurTask = BlurTask {
        blobs: 5,
        sigma: (1.5, 3.5),
        radius: 2,
    };

    pub fn pairs(&self, n: usize, size: usize, seed: u64) -> Vec<Pair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = smooth_image(size, self.blobs, self.sigma, &mut rng);
                (box_blur(&x, self.radius), x)
            })
            .collect()
    }
}

/// Sum of sines at `freqs` Hz with a short fade in/out.
pub fn tone_clip(freqs: &[f32], secs: f32, sample_rate: u32, amp: f32) -> AudioClip {
    let n = (secs * sample_rate as f32) as usize;
    let fade = (sample_rate as usize / 100).max(1).min(n / 2 + 1);
    let samples = (0..n)
        .map(|i| {
            let t = i as f32 / sample_rate as f32;
            let env = (i.min(n - 1 - i) as f32 / fade as f32).min(1.0);
            let s: f32 = freqs.iter().map(|f| (2.0 * std::f32::consts::PI * f * t).sin()).sum();
            amp * env * s / freqs.len().max(1) as f32
        })
        .collect();
    AudioClip::new(samples, sample_rate).expect("valid sample rate")
}
