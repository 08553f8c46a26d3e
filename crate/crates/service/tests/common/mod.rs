//! Model directory, server and WAV fixtures.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use dyslab_core::audio_io::{encode_wav_pcm16, AudioClip};
use dyslab_core::models::{Arch, DetectorConfig, Model, SeverityConfig, UNetConfig};
use dyslab_core::synthetic::tone_clip;
use dyslab_service::{router, ServiceState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes untrained full-size models into `dir`. Classifier heads get random
/// values so the outputs depend on the input.
pub fn write_models(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (file, arch) in [
        ("detector.dysw", Arch::Detector(DetectorConfig::default())),
        ("severity.dysw", Arch::Severity(SeverityConfig::default())),
        ("unet.dysw", Arch::UNet(UNetConfig::default())),
    ] {
        let mut m = Model::new(arch, 1337).unwrap();
        if let Ok(head) = m.weights.get_mut("dense2.kernel") {
            for v in head.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        m.save(&dir.join(file)).unwrap();
    }
}

pub fn state() -> Arc<ServiceState> {
    static STATE: OnceLock<Arc<ServiceState>> = OnceLock::new();
    STATE
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            write_models(dir.path());
            Arc::new(ServiceState::load(dir.path()).unwrap())
        })
        .clone()
}

/// Serves on an ephemeral port for the rest of the test's runtime.
pub async fn spawn_server() -> String {
    let app = router(state(), None).unwrap();
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

pub fn wav(clip: &AudioClip) -> Vec<u8> {
    encode_wav_pcm16(clip)
}

/// Two-tone fixture, 1.5 s at 22.05 kHz (so the service has to resample).
pub fn fixture_wav() -> Vec<u8> {
    wav(&tone_clip(&[220.0, 660.0, 1500.0], 1.5, 22_050, 0.6))
}

pub fn silent_wav(secs: f32) -> Vec<u8> {
    wav(&AudioClip::new(vec![0.0; (secs * 16_000.0) as usize], 16_000).unwrap())
}

pub fn long_wav(secs: f32) -> Vec<u8> {
    wav(&tone_clip(&[300.0], secs, 8_000, 0.3))
}

pub async fn post_audio(base: &str, path: &str, bytes: Vec<u8>) -> reqwest::Response {
    let part = reqwest::multipart::Part::bytes(bytes).file_name("clip.wav");
    let form = reqwest::multipart::Form::new().part("audio", part);
    reqwest::Client::new()
        .post(format!("{base}{path}"))
        .multipart(form)
        .send()
        .await
        .unwrap()
}

/// `(width, height)` from a binary PNM header.
pub fn pnm_dims(bytes: &[u8], magic: &str) -> (usize, usize) {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(32)]);
    let mut it = text.split_ascii_whitespace();
    assert_eq!(it.next(), Some(magic));
    let w = it.next().unwrap().parse().unwrap();
    let h = it.next().unwrap().parse().unwrap();
    (w, h)
}
