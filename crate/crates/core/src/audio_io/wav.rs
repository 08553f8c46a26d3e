use std::path::Path;

use super::{read_file, AudioIoError};

/// Sample rate every feature pipeline assumes.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, clamping samples into [-1, 1] (NaN becomes 0).
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioIoError> {
        if sample_rate == 0 {
            return Err(AudioIoError::BadSampleRate(sample_rate));
        }
        let samples = samples
            .into_iter()
            .map(|s| if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) })
            .collect();
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioIoError> {
    decode_wav(&read_file(path.as_ref())?)
}

/// Decodes a RIFF/WAVE buffer holding 16-bit PCM or 32-bit float samples,
/// one or two channels. Stereo frames are averaged to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioIoError> {
    if bytes.len() < 4 || &bytes[..4] != b"RIFF" {
        return Err(AudioIoError::BadMagic { expected: "RIFF" });
    }
    if bytes.len() < 12 || &bytes[8..12] != b"WAVE" {
        return Err(AudioIoError::BadMagic { expected: "WAVE" });
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().expect("4 bytes")) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            if size < 16 || body + 16 > bytes.len() {
                return Err(AudioIoError::Malformed("fmt chunk too short".into()));
            }
            let f = &bytes[body..];
            let u16_at = |o: usize| u16::from_le_bytes([f[o], f[o + 1]]);
            let mut tag = u16_at(0);
            let channels = u16_at(2);
            let rate = u32::from_le_bytes(f[4..8].try_into().expect("4 bytes"));
            let bits = u16_at(14);
            if tag == FORMAT_EXTENSIBLE {
                // sub-format GUID starts at offset 24; its first two bytes carry the tag
                if size < 26 || body + 26 > bytes.len() {
                    return Err(AudioIoError::Malformed("extensible fmt chunk too short".into()));
                }
                tag = u16_at(24);
            }
            fmt = Some((tag, channels, rate, bits));
        } else if id == b"data" {
            let Some((tag, channels, rate, bits)) = fmt else {
                return Err(AudioIoError::Malformed("data chunk before fmt chunk".into()));
            };
            let available = bytes.len() - body;
            if available < size {
                return Err(AudioIoError::TruncatedData {
                    declared: size,
                    available,
                });
            }
            let data = &bytes[body..body + size];
            return decode_samples(data, tag, channels, rate, bits);
        }
        pos = body + size + (size & 1);
    }
    Err(AudioIoError::Malformed("no data chunk".into()))
}

fn decode_samples(data: &[u8], tag: u16, channels: u16, rate: u32, bits: u16) -> Result<AudioClip, AudioIoError> {
    if !(1..=2).contains(&channels) {
        return Err(AudioIoError::UnsupportedEncoding(format!("{channels} channels")));
    }
    let frame_values: Vec<f32> = match (tag, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect(),
        _ => {
            return Err(AudioIoError::UnsupportedEncoding(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    let samples = if channels == 2 {
        frame_values
            .chunks_exact(2)
            .map(|f| (f[0] + f[1]) * 0.5)
            .collect()
    } else {
        frame_values
    };
    AudioClip::new(samples, rate)
}

/// Encodes a mono clip as 16-bit PCM WAV.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Linear-interpolation resampling. Output sample `i` reads the source at
/// position `i · source_rate / target_rate`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioIoError> {
    if target_rate == 0 {
        return Err(AudioIoError::BadSampleRate(target_rate));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = clip.samples();
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let out_len = (src.len() as f64 / ratio).round() as usize;
    let last = src.len().saturating_sub(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = (pos.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = (pos - i0 as f64).clamp(0.0, 1.0);
            (src[i0] as f64 * (1.0 - frac) + src[i1] as f64 * frac) as f32
        })
        .collect();
    AudioClip::new(samples, target_rate)
}
