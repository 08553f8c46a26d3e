use std::fs;
use std::path::Path;

use dyslab_core::audio_io::{encode_wav_pcm16, save_tensor};
use dyslab_core::features::FeatureKind;
use dyslab_core::metrics::eval_l1;
use dyslab_core::models::{Arch, DetectorConfig, Model, SeverityConfig, UNetConfig};
use dyslab_core::nn::Tensor;
use dyslab_core::synthetic::{separable_images, tone_clip, BlurTask};
use dyslab_core::train::{
    finetune_unet, ingest_classification_dir, ingest_paired_dir, one_hot, train_classifier, train_unet, SplitSpec,
    TrainConfig, TrainError, TrainReport,
};
use proptest::prelude::*;

fn write_tone(path: &Path, hz: f32) {
    fs::write(path, encode_wav_pcm16(&tone_clip(&[hz], 0.5, 16_000, 0.5))).unwrap();
}

fn two_class_root() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (class, freqs) in [("dysarthric", [300.0, 500.0]), ("control", [1200.0, 2000.0])] {
        let d = dir.path().join(class);
        fs::create_dir(&d).unwrap();
        for (i, hz) in freqs.iter().enumerate() {
            write_tone(&d.join(format!("utt{i}.wav")), *hz);
        }
        fs::write(d.join("notes.txt"), "ignored").unwrap();
    }
    dir
}

#[test]
fn ingest_two_by_two() {
    let root = two_class_root();
    let ds = ingest_classification_dir(root.path(), FeatureKind::Mfcc, 64).unwrap();
    assert_eq!(ds.len(), 4);
    // lexicographic: control before dysarthric
    assert_eq!(ds.class_names, ["control", "dysarthric"]);
    assert_eq!(ds.items.iter().map(|(_, l)| *l).collect::<Vec<_>>(), [0, 0, 1, 1]);
    assert!(ds.items.iter().all(|(x, _)| x.shape() == [1, 64, 64]));
    assert_eq!(ds.manifest().lines().next().unwrap(), "control/utt0.wav\t0");
}

#[test]
fn ingest_is_deterministic() {
    let root = two_class_root();
    let a = ingest_classification_dir(root.path(), FeatureKind::Mel, 32).unwrap();
    let b = ingest_classification_dir(root.path(), FeatureKind::Mel, 32).unwrap();
    assert_eq!(a.manifest(), b.manifest());
    for ((x, _), (y, _)) in a.items.iter().zip(&b.items) {
        assert_eq!(x, y);
    }
}

#[test]
fn ingest_errors() {
    let root = two_class_root();
    fs::create_dir(root.path().join("empty")).unwrap();
    assert!(matches!(
        ingest_classification_dir(root.path(), FeatureKind::Mfcc, 64),
        Err(TrainError::EmptyClass(_))
    ));
    let bare = tempfile::tempdir().unwrap();
    assert!(matches!(
        ingest_classification_dir(bare.path(), FeatureKind::Mfcc, 64),
        Err(TrainError::NoClasses(_))
    ));
}

#[test]
fn ingest_dyst_grids() {
    let dir = tempfile::tempdir().unwrap();
    for (class, level) in [("a", 1.0f32), ("b", 3.0)] {
        let d = dir.path().join(class);
        fs::create_dir(&d).unwrap();
        let grid = Tensor::from_fn(&[20, 30], |i| level * (i % 7) as f32);
        save_tensor(&grid, d.join("x.dyst")).unwrap();
    }
    let ds = ingest_classification_dir(dir.path(), FeatureKind::Mel, 16).unwrap();
    assert_eq!(ds.len(), 2);
    assert!(ds.items.iter().all(|(x, _)| x.shape() == [1, 16, 16]));
}

#[test]
fn paired_by_stem() {
    let dir = tempfile::tempdir().unwrap();
    for side in ["dysarthric", "clean"] {
        fs::create_dir(dir.path().join(side)).unwrap();
    }
    write_tone(&dir.path().join("dysarthric/s1.wav"), 400.0);
    write_tone(&dir.path().join("clean/s1.wav"), 440.0);
    write_tone(&dir.path().join("dysarthric/orphan.wav"), 400.0);
    write_tone(&dir.path().join("clean/s2.wav"), 440.0);
    let ds = ingest_paired_dir(dir.path(), 32).unwrap();
    assert_eq!(ds.keys, ["s1"]);
    assert_eq!(ds.pairs[0].0.shape(), ds.pairs[0].1.shape());

    fs::remove_file(dir.path().join("clean/s1.wav")).unwrap();
    assert!(matches!(ingest_paired_dir(dir.path(), 32), Err(TrainError::NoPairs(_))));
}

#[test]
fn split_counts() {
    let spec = SplitSpec::default();
    let [a, b, c] = spec.indices(1000).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (700, 200, 100));
    let [a, b, c] = spec.indices(10).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (7, 2, 1));
    assert_eq!(spec.indices(10).unwrap(), spec.indices(10).unwrap());
    assert!(matches!(spec.indices(9), Err(TrainError::TooSmall(9))));
    let bad = SplitSpec { train: 0.8, ..spec };
    assert!(matches!(bad.indices(100), Err(TrainError::BadSplit(_))));
}

proptest! {
    #[test]
    fn splits_partition(n in 10usize..400, seed in any::<u64>()) {
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let [a, b, c] = spec.indices(n).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(a.len(), (0.7 * n as f64 + 1e-9).floor() as usize);
        prop_assert_eq!(a.len() + b.len(), (0.9 * n as f64 + 1e-9).floor() as usize);
    }
}

#[test]
fn one_hot_cases() {
    assert_eq!(one_hot(2, 4).unwrap(), [0.0, 0.0, 1.0, 0.0]);
    assert_eq!(one_hot(0, 2).unwrap(), [1.0, 0.0]);
    assert!(matches!(one_hot(4, 4), Err(TrainError::OutOfRange { label: 4, classes: 4 })));
}

fn small_detector() -> Model {
    Model::new(Arch::Detector(DetectorConfig { size: 16 }), 7).unwrap()
}

#[test]
fn zero_epochs_leave_weights() {
    let mut m = small_detector();
    let before = m.weights.clone();
    let data = separable_images(8, 16, 1);
    let out = train_classifier(&mut m, &data, &[], TrainConfig::classifier(0)).unwrap();
    assert!(out.report.epochs.is_empty());
    assert_eq!(m.weights, before);
    assert_eq!(out.best, before);
}

fn without_clock(mut r: TrainReport) -> TrainReport {
    r.wall_secs = 0.0;
    r
}

#[test]
fn reports_are_reproducible() {
    let data = separable_images(12, 16, 2);
    let run = || {
        let mut m = small_detector();
        let cfg = TrainConfig { batch: 4, ..TrainConfig::classifier(3) };
        let out = train_classifier(&mut m, &data[..8], &data[8..], cfg).unwrap();
        (without_clock(out.report), m.weights)
    };
    let (r1, w1) = run();
    let (r2, w2) = run();
    assert_eq!(r1, r2);
    assert_eq!(w1, w2);
    assert_eq!(r1.epochs.len(), 3);
    assert!(r1.epochs.iter().all(|e| e.val_loss.is_some() && e.train_acc.is_some()));
}

#[test]
fn separable_loss_decreases() {
    let mut m = small_detector();
    let data = separable_images(8, 16, 3);
    let out = train_classifier(&mut m, &data, &[], TrainConfig::classifier(30)).unwrap();
    let e = &out.report.epochs;
    assert!(e.last().unwrap().train_loss < e[0].train_loss);
    assert!(e.iter().all(|s| s.train_loss.is_finite()));
}

#[test]
fn labels_beyond_the_head_are_rejected() {
    let mut m = Model::new(Arch::Severity(SeverityConfig { size: 16 }), 1).unwrap();
    let data = vec![(Tensor::zeros(&[1, 16, 16]), 4)];
    assert!(matches!(
        train_classifier(&mut m, &data, &[], TrainConfig::classifier(1)),
        Err(TrainError::OutOfRange { label: 4, classes: 4 })
    ));
    let wrong = vec![(Tensor::zeros(&[1, 8, 8]), 0)];
    assert!(train_classifier(&mut m, &wrong, &[], TrainConfig::classifier(1)).is_err());
}

#[test]
fn report_files() {
    let mut m = small_detector();
    let data = separable_images(8, 16, 4);
    let out = train_classifier(&mut m, &data, &data, TrainConfig::classifier(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.report.write(dir.path(), "det").unwrap();
    let csv = fs::read_to_string(dir.path().join("det.epochs.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epoch,train_loss,val_loss,train_acc,val_acc");
    assert_eq!(lines.count(), 2);
    let kv = fs::read_to_string(dir.path().join("det.report.txt")).unwrap();
    assert!(kv.contains("epochs 2\n") && kv.contains("seed 1337\n"));
}

const SMALL_UNET: Arch = Arch::UNet(UNetConfig { size: 16, base: 4, depth: 2 });

#[test]
fn finetune_contracts() {
    let pre = Model::new(SMALL_UNET, 5).unwrap();
    let pairs = BlurTask::SHIFTED.pairs(4, 16, 1);
    let (m, out) = finetune_unet(SMALL_UNET, &pre, &pairs, &[], TrainConfig::unet(0)).unwrap();
    assert_eq!(m.weights, pre.weights);
    assert!(out.report.finetuned);
    assert!(out.report.key_values().contains("tag finetuned"));

    let other = Arch::UNet(UNetConfig { size: 16, base: 4, depth: 1 });
    assert!(matches!(
        finetune_unet(other, &pre, &pairs, &[], TrainConfig::unet(1)),
        Err(TrainError::Model(_))
    ));
}

#[test]
fn unet_learns_deblurring() {
    let arch = Arch::UNet(UNetConfig { size: 16, base: 4, depth: 2 });
    let mut m = Model::new(arch, 1).unwrap();
    let train = BlurTask::SOURCE.pairs(64, 16, 1);
    let test = BlurTask::SOURCE.pairs(16, 16, 2);
    let before = eval_l1(&m, &test).unwrap();
    let cfg = TrainConfig { lr: 3e-4, ..TrainConfig::unet(10) };
    let out = train_unet(&mut m, &train, &[], cfg).unwrap();
    assert_eq!(out.report.epochs.len(), 10);
    let after = eval_l1(&m, &test).unwrap();
    assert!(after < before, "{after} vs {before}");
}
