#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dyslab_core::audio_io::encode_wav_pcm16;
use dyslab_core::synthetic::tone_clip;

pub fn dyslab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dyslab"));
    c.env_remove("DYSLAB_DATA");
    c
}

pub fn run(args: &[&str]) -> Output {
    dyslab().args(args).output().expect("spawn dyslab")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn write_tone(path: &Path, freqs: &[f32], secs: f32) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, encode_wav_pcm16(&tone_clip(freqs, secs, 16_000, 0.5))).unwrap();
}

/// `<root>/<class>/uttN.wav`, each class with its own pitch range.
pub fn class_tree(root: &Path, classes: &[&str], per_class: usize) {
    for (c, name) in classes.iter().enumerate() {
        for i in 0..per_class {
            let f = 200.0 + 900.0 * c as f32 + 25.0 * i as f32;
            write_tone(&root.join(name).join(format!("utt{i}.wav")), &[f, 2.0 * f], 0.6);
        }
    }
}

/// `<root>/{dysarthric,clean}/pN.wav` pairs.
pub fn paired_tree(root: &Path, n: usize) {
    for i in 0..n {
        let f = 300.0 + 40.0 * i as f32;
        write_tone(&root.join("dysarthric").join(format!("p{i}.wav")), &[f, 3.1 * f], 0.6);
        write_tone(&root.join("clean").join(format!("p{i}.wav")), &[f], 0.6);
    }
}

pub fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
