use std::fs;
use std::path::{Path, PathBuf};

use dyslab_core::audio_io::{load_wav, save_image_gray, save_image_rgb, save_tensor, AudioIoError};
use dyslab_core::features::{
    detector_input, image_to_audio, raw_features, spectrogram_input, FeatureError, FeatureKind, SPECTROGRAM_SIZE,
};
use dyslab_core::interpret::{grad_cam, overlay, InterpretError};
use dyslab_core::metrics::{accuracy, eval_l1, wer_tsv, MetricsError};
use dyslab_core::models::{
    argmax_label, decode, predict_detector, predict_severity, translate_spectrogram, Arch, ArchKind, DetectorConfig,
    Model, ModelError, SeverityConfig, SeverityLabel, UNetConfig,
};
use dyslab_core::nn::Tensor;
use dyslab_core::train::{
    finetune_unet, ingest_classification_dir, ingest_paired_dir, train_classifier, train_unet, LabeledDataset,
    SplitSpec, TrainConfig, TrainError, TrainOutcome,
};

use crate::{CliError, TrainOpts, UNetOpts};

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

impl From<AudioIoError> for CliError {
    fn from(e: AudioIoError) -> Self {
        data(e)
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        data(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Nn(e) => internal(e),
            other => data(other),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(e) => e.into(),
            TrainError::Nn(e) => internal(e),
            TrainError::BadSplit(_) => CliError::Usage(e.to_string()),
            other => data(other),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Model(e) => e.into(),
            other => data(other),
        }
    }
}

impl From<InterpretError> for CliError {
    fn from(e: InterpretError) -> Self {
        match e {
            InterpretError::NotAConvLayer(_) | InterpretError::BadClass { .. } => CliError::Usage(e.to_string()),
            InterpretError::Nn(e) => internal(e),
            other => data(other),
        }
    }
}

fn ensure_input(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(data(format!("{} does not exist", path.display())))
    }
}

/// Parent directory of an output file, which must already exist.
fn out_dir(out: &Path) -> Result<PathBuf, CliError> {
    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if !dir.is_dir() {
        return Err(data(format!("output directory {} does not exist", dir.display())));
    }
    Ok(dir)
}

fn stem(out: &Path) -> String {
    out.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn extract(input: &Path, out: &Path, features: &str) -> Result<(), CliError> {
    let kind = FeatureKind::parse(features)
        .ok_or_else(|| CliError::Usage(format!("--features must be mfcc or mel, got {features:?}")))?;
    ensure_input(input)?;
    out_dir(out)?;
    let grid = raw_features(&load_wav(input)?, kind)?;
    save_tensor(&grid, out)?;
    println!("{} {}×{} → {}", features, grid.shape()[0], grid.shape()[1], out.display());
    Ok(())
}

fn parse_split(s: &str, seed: u64) -> Result<SplitSpec, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--split expects three comma-separated fractions, got {s:?}")))?;
    let [train, val, test] = parts[..] else {
        return Err(CliError::Usage(format!("--split expects three fractions, got {s:?}")));
    };
    let spec = SplitSpec { train, val, test, seed };
    spec.validate()?;
    Ok(spec)
}

fn train_config(t: &TrainOpts, base: TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs.unwrap_or(base.epochs),
        lr: t.lr.unwrap_or(base.lr),
        batch: t.batch.unwrap_or(base.batch),
        seed: t.seed,
    }
}

/// Writes the dataset manifest next to the model and returns the three splits.
fn prepare<T: Clone>(t: &TrainOpts, items: &[T], manifest: Option<String>) -> Result<[Vec<T>; 3], CliError> {
    let spec = parse_split(&t.split, t.seed)?;
    let dir = out_dir(&t.out)?;
    if let Some(m) = manifest {
        write_file(&dir.join(format!("{}.dataset.tsv", stem(&t.out))), m)?;
    }
    Ok(spec.split(items)?)
}

fn finish(model: &Model, outcome: &mut TrainOutcome, out: &Path, metric: (&str, Option<f64>)) -> Result<(), CliError> {
    let dir = out_dir(out)?;
    let stem = stem(out);
    model.save(out)?;
    let best = Model::with_weights(model.arch, outcome.best.clone())?;
    best.save(&dir.join(format!("{stem}.best.dysw")))?;
    if let (name, Some(v)) = metric {
        outcome.report.test_metric = Some((name.to_string(), v));
    }
    outcome.report.write(&dir, &stem)?;
    let r = &outcome.report;
    let last = r.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN);
    print!("{} epochs, final train loss {last:.4}, best epoch {}", r.epochs.len(), r.best_epoch);
    match &r.test_metric {
        Some((name, v)) => println!(", test {name} {v:.4}"),
        None => println!(", no test split"),
    }
    println!("weights → {}", out.display());
    Ok(())
}

fn classifier_accuracy(
    model: &Model,
    test: &[(Tensor, usize)],
    predict: impl Fn(&Model, &Tensor) -> Result<usize, CliError>,
) -> Result<Option<f64>, CliError> {
    if test.is_empty() {
        return Ok(None);
    }
    let preds = test.iter().map(|(x, _)| predict(model, x)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<usize> = test.iter().map(|(_, l)| *l).collect();
    Ok(Some(accuracy(&preds, &labels)?))
}

/// Relabels so that `positive` becomes class 1 of a two-class set.
fn make_positive(ds: &mut LabeledDataset, positive: usize) {
    if positive == 1 {
        return;
    }
    for (_, l) in &mut ds.items {
        *l = 1 - *l;
    }
    ds.class_names.swap(0, 1);
}

pub fn train_detect(t: &TrainOpts) -> Result<(), CliError> {
    ensure_input(&t.data_root)?;
    let mut ds = ingest_classification_dir(&t.data_root, FeatureKind::Mfcc, DetectorConfig::default().size)?;
    if ds.class_names.len() != 2 {
        return Err(data(format!("detection needs two classes, found {:?}", ds.class_names)));
    }
    // the class named "dysarthric" is the positive one; otherwise the second
    let positive = ds.class_names.iter().position(|n| n == "dysarthric").unwrap_or(1);
    make_positive(&mut ds, positive);
    println!(
        "{} files, negative {:?}, positive {:?}",
        ds.len(),
        ds.class_names[0],
        ds.class_names[1]
    );
    let [train, val, test] = prepare(t, &ds.items, Some(ds.manifest()))?;
    let mut model = Model::new(Arch::Detector(DetectorConfig::default()), t.seed)?;
    let mut outcome = train_classifier(&mut model, &train, &val, train_config(t, TrainConfig::classifier(50)))?;
    let acc = classifier_accuracy(&model, &test, |m, x| Ok(usize::from(predict_detector(m, x)? >= 0.5)))?;
    finish(&model, &mut outcome, &t.out, ("accuracy", acc))
}

pub fn train_severity(t: &TrainOpts) -> Result<(), CliError> {
    ensure_input(&t.data_root)?;
    let mut ds = ingest_classification_dir(&t.data_root, FeatureKind::Mel, SeverityConfig::default().size)?;
    if ds.class_names.len() != 4 {
        return Err(data(format!("severity needs four classes, found {:?}", ds.class_names)));
    }
    // directories named after the labels map by name, anything else by sort order
    let by_name: Option<Vec<usize>> = ds
        .class_names
        .iter()
        .map(|n| SeverityLabel::parse(n).map(SeverityLabel::index))
        .collect();
    if let Some(map) = by_name {
        for (_, l) in &mut ds.items {
            *l = map[*l];
        }
        ds.class_names = SeverityLabel::ALL.iter().map(|s| s.as_str().to_string()).collect();
    }
    println!("{} files, classes {:?}", ds.len(), ds.class_names);
    let [train, val, test] = prepare(t, &ds.items, Some(ds.manifest()))?;
    let mut model = Model::new(Arch::Severity(SeverityConfig::default()), t.seed)?;
    let mut outcome = train_classifier(&mut model, &train, &val, train_config(t, TrainConfig::classifier(10)))?;
    let acc = classifier_accuracy(&model, &test, |m, x| Ok(argmax_label(&predict_severity(m, x)?).index()))?;
    finish(&model, &mut outcome, &t.out, ("accuracy", acc))
}

fn unet_arch(u: &UNetOpts, fallback: UNetConfig) -> Arch {
    Arch::UNet(UNetConfig {
        size: SPECTROGRAM_SIZE,
        base: u.base.unwrap_or(fallback.base),
        depth: u.depth.unwrap_or(fallback.depth),
    })
}

fn pairs_and_split(t: &TrainOpts) -> Result<[Vec<dyslab_core::train::Pair>; 3], CliError> {
    ensure_input(&t.data_root)?;
    let ds = ingest_paired_dir(&t.data_root, SPECTROGRAM_SIZE)?;
    println!("{} matched pairs", ds.pairs.len());
    let manifest: String = ds.keys.iter().map(|k| format!("{k}\n")).collect();
    prepare(t, &ds.pairs, Some(manifest))
}

fn test_l1(model: &Model, test: &[dyslab_core::train::Pair]) -> Result<Option<f64>, CliError> {
    if test.is_empty() {
        return Ok(None);
    }
    Ok(Some(eval_l1(model, test)?))
}

pub fn train_s2s(t: &TrainOpts, u: &UNetOpts) -> Result<(), CliError> {
    let [train, val, test] = pairs_and_split(t)?;
    let mut model = Model::new(unet_arch(u, UNetConfig::default()), t.seed)?;
    let mut outcome = train_unet(&mut model, &train, &val, train_config(t, TrainConfig::unet(300)))?;
    let l1 = test_l1(&model, &test)?;
    finish(&model, &mut outcome, &t.out, ("l1", l1))
}

pub fn finetune_s2s(t: &TrainOpts, u: &UNetOpts, init: &Path) -> Result<(), CliError> {
    ensure_input(init)?;
    let pretrained = Model::load(init, Some(ArchKind::UNet))?;
    let Arch::UNet(pre_cfg) = pretrained.arch else {
        unreachable!("loaded with the U-Net kind check")
    };
    let arch = unet_arch(u, pre_cfg);
    let [train, val, test] = pairs_and_split(t)?;
    let (model, mut outcome) = finetune_unet(arch, &pretrained, &train, &val, train_config(t, TrainConfig::unet(300)))?;
    let l1 = test_l1(&model, &test)?;
    finish(&model, &mut outcome, &t.out, ("l1", l1))
}

fn load(model: &Path, kind: ArchKind) -> Result<Model, CliError> {
    ensure_input(model)?;
    Ok(Model::load(model, Some(kind))?)
}

fn load_clip(input: &Path) -> Result<dyslab_core::audio_io::AudioClip, CliError> {
    ensure_input(input)?;
    Ok(load_wav(input)?)
}

pub fn infer_detect(model: &Path, input: &Path) -> Result<(), CliError> {
    let m = load(model, ArchKind::Detector)?;
    let p = predict_detector(&m, &detector_input(&load_clip(input)?)?)?;
    println!("{} p={p:.2}", decode(p, 0.5).as_str());
    Ok(())
}

pub fn infer_severity(model: &Path, input: &Path) -> Result<(), CliError> {
    let m = load(model, ArchKind::Severity)?;
    let feat = spectrogram_input(&load_clip(input)?, SPECTROGRAM_SIZE)?;
    let p = predict_severity(&m, &feat.image)?;
    print!("{}", argmax_label(&p).as_str());
    for (label, v) in SeverityLabel::ALL.iter().zip(p) {
        print!(" {}={v:.4}", label.as_str());
    }
    println!();
    Ok(())
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn translate(model: &Path, input: &Path, out: &Path, iters: usize) -> Result<(), CliError> {
    let m = load(model, ArchKind::UNet)?;
    let clip = load_clip(input)?;
    out_dir(out)?;
    let feat = spectrogram_input(&clip, SPECTROGRAM_SIZE)?;
    let clean = translate_spectrogram(&m, &feat.image)?;
    let grid = clean.clone().reshape(&[SPECTROGRAM_SIZE, SPECTROGRAM_SIZE]).map_err(internal)?;
    let audio = image_to_audio(&clean, &feat, iters)?;
    let paths = [with_suffix(out, "dyst"), with_suffix(out, "pgm"), with_suffix(out, "wav")];
    save_tensor(&grid, &paths[0])?;
    save_image_gray(&grid, &paths[1])?;
    write_file(&paths[2], dyslab_core::audio_io::encode_wav_pcm16(&audio))?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn gradcam(model: &Path, input: &Path, out: &Path, class: Option<&str>, layer: Option<&str>) -> Result<(), CliError> {
    let class = class
        .map(|c| {
            SeverityLabel::parse(c)
                .ok_or_else(|| CliError::Usage(format!("--class must be very_low, low, medium or high, got {c:?}")))
        })
        .transpose()?;
    let m = load(model, ArchKind::Severity)?;
    let clip = load_clip(input)?;
    out_dir(out)?;
    let feat = spectrogram_input(&clip, SPECTROGRAM_SIZE)?;
    let target = match class {
        Some(c) => c,
        None => argmax_label(&predict_severity(&m, &feat.image)?),
    };
    let cam = grad_cam(&m, &feat.image, target.index(), layer)?;
    save_image_rgb(&overlay(&cam, &feat.image)?, out)?;
    println!("class {} layer {} → {}", target.as_str(), cam.source_layer, out.display());
    let bands: Vec<String> = cam.band_mass(4).iter().map(|v| format!("{v:.3}")).collect();
    println!("heat per mel quarter (low→high): {}", bands.join(" "));
    Ok(())
}

pub fn eval_wer(pairs: &Path) -> Result<(), CliError> {
    ensure_input(pairs)?;
    let text = fs::read_to_string(pairs).map_err(|e| data(format!("{}: {e}", pairs.display())))?;
    println!("wer {:.4}", wer_tsv(&text)?);
    Ok(())
}

pub fn serve(model_dir: PathBuf, port: u16, host: std::net::Ipv4Addr, cors_origin: Option<String>) -> Result<(), CliError> {
    let cfg = dyslab_service::ServeConfig {
        model_dir,
        port,
        host: host.octets(),
        cors_origin,
    };
    dyslab_service::serve_blocking(&cfg).map_err(|e| match e {
        dyslab_service::StartupError::CorsOrigin(_) => CliError::Usage(e.to_string()),
        other => data(other),
    })
}
