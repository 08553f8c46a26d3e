//! Request pipelines, independent of the HTTP layer.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use dyslab_core::audio_io::{decode_wav, encode_pgm, encode_ppm, encode_wav_pcm16, AudioClip};
use dyslab_core::dsp::DEFAULT_GRIFFIN_LIM_ITERS;
use dyslab_core::features::{detector_input, image_to_audio, spectrogram_input, FeatureError, SPECTROGRAM_SIZE};
use dyslab_core::interpret::{grad_cam, overlay};
use dyslab_core::models::{argmax_label, decode, predict_detector, predict_severity, translate_spectrogram, SeverityLabel};
use serde::Serialize;

use crate::{ApiError, ServiceState};

/// Longest accepted upload.
pub const MAX_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectResponse {
    pub probability: f32,
    pub label: &'static str,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeverityProbabilities {
    pub very_low: f32,
    pub low: f32,
    pub medium: f32,
    pub high: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeverityResponse {
    pub probabilities: SeverityProbabilities,
    pub label: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCamResponse {
    pub overlay_ppm_base64: String,
    pub target_class: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslateResponse {
    pub clean_spectrogram_pgm_base64: String,
    pub audio_wav_base64: String,
}

/// Parses an uploaded WAV and enforces the length cap.
pub fn decode_upload(bytes: &[u8]) -> Result<AudioClip, ApiError> {
    if bytes.is_empty() {
        return Err(ApiError::BadRequest("empty upload".into()));
    }
    let clip = decode_wav(bytes).map_err(|e| ApiError::BadRequest(format!("not a usable WAV file: {e}")))?;
    if clip.is_empty() {
        return Err(ApiError::BadRequest("WAV file holds no samples".into()));
    }
    // resampling keeps the duration, so the cap can be checked up front
    if clip.duration_secs() > MAX_SECONDS {
        return Err(ApiError::TooLong(clip.duration_secs()));
    }
    Ok(clip)
}

fn feature_err(e: FeatureError) -> ApiError {
    match e {
        FeatureError::Silent => ApiError::Unprocessable("silent audio".into()),
        other => ApiError::Internal(other.to_string()),
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(e.to_string())
}

pub fn detect(state: &ServiceState, clip: &AudioClip) -> Result<DetectResponse, ApiError> {
    let x = detector_input(clip).map_err(feature_err)?;
    let p = predict_detector(&state.detector, &x).map_err(internal)?;
    Ok(DetectResponse {
        probability: p,
        label: decode(p, 0.5).as_str(),
        model_version: state.version.clone(),
    })
}

pub fn severity(state: &ServiceState, clip: &AudioClip) -> Result<SeverityResponse, ApiError> {
    let feat = spectrogram_input(clip, SPECTROGRAM_SIZE).map_err(feature_err)?;
    let p = predict_severity(&state.severity, &feat.image).map_err(internal)?;
    Ok(SeverityResponse {
        probabilities: SeverityProbabilities {
            very_low: p[0],
            low: p[1],
            medium: p[2],
            high: p[3],
        },
        label: argmax_label(&p).as_str(),
    })
}

/// `class` defaults to the predicted severity.
pub fn gradcam(state: &ServiceState, clip: &AudioClip, class: Option<&str>) -> Result<GradCamResponse, ApiError> {
    let class = class
        .map(|c| SeverityLabel::parse(c).ok_or_else(|| ApiError::Unprocessable(format!("unknown class {c:?}"))))
        .transpose()?;
    let feat = spectrogram_input(clip, SPECTROGRAM_SIZE).map_err(feature_err)?;
    let target = match class {
        Some(c) => c,
        None => argmax_label(&predict_severity(&state.severity, &feat.image).map_err(internal)?),
    };
    let cam = grad_cam(&state.severity, &feat.image, target.index(), None).map_err(internal)?;
    let rgb = overlay(&cam, &feat.image).map_err(internal)?;
    Ok(GradCamResponse {
        overlay_ppm_base64: B64.encode(encode_ppm(&rgb).map_err(internal)?),
        target_class: target.as_str(),
    })
}

pub fn translate(state: &ServiceState, clip: &AudioClip) -> Result<TranslateResponse, ApiError> {
    let feat = spectrogram_input(clip, SPECTROGRAM_SIZE).map_err(feature_err)?;
    let clean = translate_spectrogram(&state.unet, &feat.image).map_err(internal)?;
    let grid = clean.clone().reshape(&[SPECTROGRAM_SIZE, SPECTROGRAM_SIZE]).map_err(internal)?;
    let pgm = encode_pgm(&grid).map_err(internal)?;
    let audio = image_to_audio(&clean, &feat, DEFAULT_GRIFFIN_LIM_ITERS).map_err(feature_err)?;
    Ok(TranslateResponse {
        clean_spectrogram_pgm_base64: B64.encode(pgm),
        audio_wav_base64: B64.encode(encode_wav_pcm16(&audio)),
    })
}
