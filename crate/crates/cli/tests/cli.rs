mod common;

use std::fs;

use common::{class_tree, dyslab, p, paired_tree, run, s, stderr, stdout, write_tone};
use dyslab_core::audio_io::{decode_wav, load_tensor};

#[test]
fn extract_writes_mfcc_grid() {
    let dir = tempfile::tempdir().unwrap();
    let wav = p(dir.path(), "a.wav");
    write_tone(&wav, &[440.0], 1.0);
    let out = p(dir.path(), "a.dyst");
    let o = run(&["extract", "--in", s(&wav), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = load_tensor(&out).unwrap();
    assert_eq!(t.shape()[0], 13);
    assert!(t.shape()[1] > 1);

    let out = p(dir.path(), "m.dyst");
    assert!(run(&["extract", "--in", s(&wav), "--out", s(&out), "--features", "mel"]).status.success());
    assert_eq!(load_tensor(&out).unwrap().shape()[0], 128);
}

#[test]
fn eval_wer_prints_corpus_rate() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = p(dir.path(), "pairs.tsv");
    fs::write(&tsv, "the cat sat\tthe cat sat\nhello world\thello word\n").unwrap();
    let o = run(&["eval-wer", "--pairs", s(&tsv)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "wer 0.2000");
}

#[test]
fn usage_errors_exit_1() {
    let o = run(&["infer-detect", "--in", "x.wav"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["extract", "--in", "a", "--out", "b", "--features", "cqt"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["infer-detect", "--model", "missing.dysw", "--in", "missing.wav"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let bad = p(dir.path(), "bad.wav");
    fs::write(&bad, b"not audio").unwrap();
    let o = run(&["extract", "--in", s(&bad), "--out", s(&p(dir.path(), "x.dyst"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["serve", "--model-dir", s(&p(dir.path(), "nothing"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_file_supplies_flags_and_cli_wins() {
    let dir = tempfile::tempdir().unwrap();
    let wav = p(dir.path(), "a.wav");
    write_tone(&wav, &[440.0], 1.0);
    let cfg = p(dir.path(), "x.conf");
    fs::write(&cfg, format!("# extraction\nin = {}\nout = {}\nfeatures = mel\n", s(&wav), s(&p(dir.path(), "cfg.dyst")))).unwrap();
    let o = run(&["extract", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(load_tensor(p(dir.path(), "cfg.dyst")).unwrap().shape()[0], 128);

    let o = run(&["extract", "--config", s(&cfg), "--features", "mfcc"]);
    assert!(o.status.success());
    assert_eq!(load_tensor(p(dir.path(), "cfg.dyst")).unwrap().shape()[0], 13);

    fs::write(&cfg, "epochz = 3\n").unwrap();
    let o = run(&["extract", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochz"));
}

#[test]
fn detect_train_infer_and_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data");
    class_tree(&data, &["control", "dysarthric"], 6);
    let out = p(dir.path(), "det.dysw");
    let o = dyslab()
        .env("DYSLAB_DATA", &data)
        .args(["train-detect", "--out", s(&out), "--epochs", "2", "--batch", "4"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["det.dysw", "det.manifest", "det.best.manifest", "det.best.dysw", "det.dataset.tsv"] {
        assert!(p(dir.path(), f).exists(), "{f} missing");
    }
    assert!(fs::read_to_string(p(dir.path(), "det.dataset.tsv")).unwrap().contains("dysarthric/utt0.wav\t1"));

    let o = run(&["infer-detect", "--model", s(&out), "--in", s(&data.join("control/utt0.wav"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let (label, prob) = line.trim().split_once(" p=").unwrap();
    assert!(["dysarthric", "non_dysarthric"].contains(&label), "{line}");
    assert!((0.0..=1.0).contains(&prob.parse::<f32>().unwrap()));

    // a detector is not a severity model
    let o = run(&["infer-severity", "--model", s(&out), "--in", s(&data.join("control/utt0.wav"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_split_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data");
    class_tree(&data, &["a", "b"], 5);
    let o = run(&["train-detect", "--data-root", s(&data), "--out", s(&p(dir.path(), "m.dysw")), "--split", "0.5,0.5,0.5"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn severity_train_infer_gradcam() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data");
    class_tree(&data, &["high", "low", "medium", "very_low"], 3);
    let out = p(dir.path(), "sev.dysw");
    let o = run(&["train-severity", "--data-root", s(&data), "--out", s(&out), "--epochs", "1", "--batch", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // labels follow the names, not the directory order
    assert!(fs::read_to_string(p(dir.path(), "sev.dataset.tsv")).unwrap().contains("high/utt0.wav\t3"));

    let wav = data.join("low/utt1.wav");
    let o = run(&["infer-severity", "--model", s(&out), "--in", s(&wav)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let parts: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(parts.len(), 5, "{line}");
    let sum: f32 = parts[1..].iter().map(|kv| kv.split_once('=').unwrap().1.parse::<f32>().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-3);

    let ppm = p(dir.path(), "cam.ppm");
    let o = run(&["gradcam", "--model", s(&out), "--in", s(&wav), "--out", s(&ppm), "--class", "medium"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read(&ppm).unwrap().starts_with(b"P6\n128 128\n255\n"));
    assert!(stdout(&o).contains("class medium"));
    let o = run(&["gradcam", "--model", s(&out), "--in", s(&wav), "--out", s(&ppm), "--class", "severe"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["gradcam", "--model", s(&out), "--in", s(&wav), "--out", s(&ppm), "--layer", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn s2s_train_finetune_translate() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "pairs");
    paired_tree(&data, 10);
    let pre = p(dir.path(), "pre.dysw");
    let small = ["--base", "4", "--depth", "2", "--epochs", "1", "--batch", "4"];
    let o = run(&[&["train-s2s", "--data-root", s(&data), "--out", s(&pre)][..], &small].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(p(dir.path(), "pre.report.txt").exists());
    assert!(p(dir.path(), "pre.epochs.csv").exists());

    let ft = p(dir.path(), "ft.dysw");
    let o = run(&[
        "finetune-s2s", "--data-root", s(&data), "--out", s(&ft), "--init-weights", s(&pre), "--epochs", "1", "--batch", "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "finetune-s2s", "--data-root", s(&data), "--out", s(&ft), "--init-weights", s(&pre), "--base", "8", "--epochs", "0",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let prefix = p(dir.path(), "clean");
    let o = run(&[
        "translate", "--model", s(&ft), "--in", s(&data.join("dysarthric/p0.wav")), "--out", s(&prefix), "--iters", "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(load_tensor(p(dir.path(), "clean.dyst")).unwrap().shape(), [128, 128]);
    assert!(fs::read(p(dir.path(), "clean.pgm")).unwrap().starts_with(b"P5\n128 128\n255\n"));
    let clip = decode_wav(&fs::read(p(dir.path(), "clean.wav")).unwrap()).unwrap();
    assert_eq!(clip.sample_rate(), 16_000);
    assert!(!clip.is_empty());
}
