//! Dataset assembly, splitting and the training loops.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{file_features, FeatureError, FeatureKind};
use crate::models::{Arch, Model, ModelError};
use crate::nn::loss::{loss_bce, loss_ce, loss_l1};
use crate::nn::{Adam, Mode, NnError, Tensor, WeightStore};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("class directory {0} holds no usable files")]
    EmptyClass(PathBuf),
    #[error("{0} holds no class subdirectories")]
    NoClasses(PathBuf),
    #[error("feature shape {found:?} of {path} differs from {expected:?}")]
    MixedFeatureShapes {
        path: PathBuf,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("no matching dysarthric/clean pairs under {0}")]
    NoPairs(PathBuf),
    #[error("dataset of {0} items is too small to split (need ≥ 10)")]
    TooSmall(usize),
    #[error("invalid split fractions {0:?}")]
    BadSplit([f64; 3]),
    #[error("label {label} out of range for {classes} classes")]
    OutOfRange { label: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{path}: {source}")]
    Feature { path: PathBuf, source: FeatureError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub items: Vec<(Tensor, usize)>,
    pub class_names: Vec<String>,
    /// Source file of each item, relative to the ingested root.
    pub paths: Vec<PathBuf>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `<relative-path>\t<class-index>` per item.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        for (p, (_, label)) in self.paths.iter().zip(&self.items) {
            let _ = writeln!(s, "{}\t{label}", p.display());
        }
        s
    }
}

pub type Pair = (Tensor, Tensor);

#[derive(Debug, Clone)]
pub struct PairedDataset {
    /// `(dysarthric, clean)` images.
    pub pairs: Vec<Pair>,
    /// Shared file stem of each pair.
    pub keys: Vec<String>,
}

fn is_feature_file(p: &Path) -> bool {
    p.is_file()
        && matches!(
            p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
            Some("wav" | "dyst")
        )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, TrainError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    v.sort();
    Ok(v)
}

fn load_features(path: &Path, kind: FeatureKind, size: usize) -> Result<Tensor, TrainError> {
    file_features(path, kind, size).map_err(|source| TrainError::Feature {
        path: path.to_path_buf(),
        source,
    })
}

/// One subdirectory per class (sorted by name, index = position); every WAV
/// or DYST file inside becomes an item. Other files are ignored.
pub fn ingest_classification_dir(root: &Path, kind: FeatureKind, size: usize) -> Result<LabeledDataset, TrainError> {
    let classes: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if classes.is_empty() {
        return Err(TrainError::NoClasses(root.to_path_buf()));
    }
    let mut ds = LabeledDataset {
        items: Vec::new(),
        class_names: Vec::new(),
        paths: Vec::new(),
    };
    for (label, dir) in classes.iter().enumerate() {
        let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| is_feature_file(p)).collect();
        if files.is_empty() {
            return Err(TrainError::EmptyClass(dir.clone()));
        }
        ds.class_names.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        for f in files {
            let x = load_features(&f, kind, size)?;
            if let Some((first, _)) = ds.items.first() {
                if first.shape() != x.shape() {
                    return Err(TrainError::MixedFeatureShapes {
                        path: f,
                        expected: first.shape().to_vec(),
                        found: x.shape().to_vec(),
                    });
                }
            }
            ds.paths.push(f.strip_prefix(root).unwrap_or(&f).to_path_buf());
            ds.items.push((x, label));
        }
    }
    Ok(ds)
}

/// Pairs `root/dysarthric/<stem>.*` with `root/clean/<stem>.*`; files
/// without a partner are skipped. Both sides become mel images.
pub fn ingest_paired_dir(root: &Path, size: usize) -> Result<PairedDataset, TrainError> {
    let side = |name: &str| -> Result<Vec<(String, PathBuf)>, TrainError> {
        let dir = root.join(name);
        Ok(sorted_entries(&dir)?
            .into_iter()
            .filter(|p| is_feature_file(p))
            .map(|p| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), p))
            .collect())
    };
    let dys = side("dysarthric")?;
    let clean = side("clean")?;
    let mut out = PairedDataset {
        pairs: Vec::new(),
        keys: Vec::new(),
    };
    for (stem, dpath) in &dys {
        let Some((_, cpath)) = clean.iter().find(|(s, _)| s == stem) else { continue };
        out.pairs
            .push((load_features(dpath, FeatureKind::Mel, size)?, load_features(cpath, FeatureKind::Mel, size)?));
        out.keys.push(stem.clone());
    }
    if out.pairs.is_empty() {
        return Err(TrainError::NoPairs(root.to_path_buf()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.2,
            test: 0.1,
            seed: crate::models::DEFAULT_SEED,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(TrainError::BadSplit(f));
        }
        Ok(())
    }

    /// Train/val/test index lists: a seeded shuffle cut at
    /// `floor(train·n)` and `floor((train+val)·n)`.
    pub fn indices(&self, n: usize) -> Result<[Vec<usize>; 3], TrainError> {
        self.validate()?;
        if n < 10 {
            return Err(TrainError::TooSmall(n));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        // the tolerance keeps e.g. (0.7 + 0.2)·10 = 8.999… from flooring to 8
        let cut = |f: f64| ((f * n as f64 + 1e-9).floor() as usize).min(n);
        let a = cut(self.train);
        let b = cut(self.train + self.val).max(a);
        let test = idx.split_off(b);
        let val = idx.split_off(a);
        Ok([idx, val, test])
    }

    pub fn split<T: Clone>(&self, items: &[T]) -> Result<[Vec<T>; 3], TrainError> {
        let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
        let [a, b, c] = self.indices(items.len())?;
        Ok([pick(&a), pick(&b), pick(&c)])
    }
}

pub fn one_hot(label: usize, classes: usize) -> Result<Vec<f32>, TrainError> {
    if label >= classes {
        return Err(TrainError::OutOfRange { label, classes });
    }
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn classifier(epochs: usize) -> Self {
        Self {
            epochs,
            lr: 1e-3,
            batch: 32,
            seed: crate::models::DEFAULT_SEED,
        }
    }

    pub fn unet(epochs: usize) -> Self {
        Self {
            epochs,
            lr: 1e-4,
            batch: 8,
            seed: crate::models::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// `classifier` or `unet`.
    pub task: &'static str,
    pub finetuned: bool,
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    /// Epoch (1-based) whose weights are kept as best; 0 = initial weights.
    pub best_epoch: usize,
    pub test_metric: Option<(String, f64)>,
    pub wall_secs: f64,
}

impl TrainReport {
    fn new(task: &'static str, config: TrainConfig) -> Self {
        Self {
            task,
            finetuned: false,
            config,
            epochs: Vec::new(),
            best_epoch: 0,
            test_metric: None,
            wall_secs: 0.0,
        }
    }

    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task {}", self.task);
        if self.finetuned {
            let _ = writeln!(s, "tag finetuned");
        }
        let _ = writeln!(s, "epochs {}", self.epochs.len());
        let _ = writeln!(s, "lr {}", self.config.lr);
        let _ = writeln!(s, "batch {}", self.config.batch);
        let _ = writeln!(s, "seed {}", self.config.seed);
        let _ = writeln!(s, "best_epoch {}", self.best_epoch);
        if let Some(last) = self.epochs.last() {
            let _ = writeln!(s, "final_train_loss {}", last.train_loss);
            if let Some(v) = last.val_loss {
                let _ = writeln!(s, "final_val_loss {v}");
            }
        }
        if let Some((name, v)) = &self.test_metric {
            let _ = writeln!(s, "test_{name} {v}");
        }
        let _ = writeln!(s, "wall_seconds {:.3}", self.wall_secs);
        s
    }

    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                opt(e.val_loss),
                opt(e.train_acc),
                opt(e.val_acc)
            );
        }
        s
    }

    /// Writes `<stem>.report.txt` and `<stem>.epochs.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), TrainError> {
        for (name, body) in [
            (format!("{stem}.report.txt"), self.key_values()),
            (format!("{stem}.epochs.csv"), self.csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_err(&p))?;
        }
        Ok(())
    }
}

/// Training result: the model holds the final weights, `best` the weights
/// of the epoch with the lowest validation loss (training loss when there is
/// no validation set).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub best: WeightStore,
}

enum Objective {
    Bce,
    Ce(usize),
    L1,
}

impl Objective {
    /// Loss, output gradient, and whether the prediction was right (classifiers).
    fn eval(&self, out: &Tensor, target: &Target<'_>) -> Result<(f64, Tensor, Option<bool>), TrainError> {
        Ok(match (self, target) {
            (Objective::Bce, Target::Label(l)) => {
                let t = Tensor::full(&[1], *l as f32);
                let (v, g) = loss_bce(out, &t)?;
                let pred = usize::from(out.data()[0] >= 0.5);
                (v as f64, g, Some(pred == *l))
            }
            (Objective::Ce(n), Target::Label(l)) => {
                let t = Tensor::new(vec![*n], one_hot(*l, *n)?)?;
                let (v, g) = loss_ce(out, &t)?;
                (v as f64, g, Some(out.argmax() == *l))
            }
            (Objective::L1, Target::Image(t)) => {
                let (v, g) = loss_l1(out, t)?;
                (v as f64, g, None)
            }
            _ => unreachable!("objective and target kinds are paired by the callers"),
        })
    }
}

enum Target<'a> {
    Label(usize),
    Image(&'a Tensor),
}

struct Sample<'a> {
    x: &'a Tensor,
    target: Target<'a>,
}

fn label_samples(items: &[(Tensor, usize)]) -> Vec<Sample<'_>> {
    items
        .iter()
        .map(|(x, l)| Sample {
            x,
            target: Target::Label(*l),
        })
        .collect()
}

fn pair_samples(items: &[Pair]) -> Vec<Sample<'_>> {
    items
        .iter()
        .map(|(x, y)| Sample {
            x,
            target: Target::Image(y),
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn evaluate(model: &Model, obj: &Objective, data: &[Sample<'_>]) -> Result<(f64, Option<f64>), TrainError> {
    let mut losses = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    let mut any_acc = false;
    for s in data {
        let out = model.graph.predict(&model.weights, s.x)?;
        let (l, _, ok) = obj.eval(&out, &s.target)?;
        losses.push(l);
        if let Some(ok) = ok {
            any_acc = true;
            correct += usize::from(ok);
        }
    }
    let acc = any_acc.then(|| correct as f64 / data.len() as f64);
    Ok((mean(&losses), acc))
}

fn fit(
    model: &mut Model,
    obj: Objective,
    train: &[Sample<'_>],
    val: &[Sample<'_>],
    cfg: TrainConfig,
    task: &'static str,
) -> Result<TrainOutcome, TrainError> {
    let start = Instant::now();
    let mut report = TrainReport::new(task, cfg);
    let mut best = model.weights.clone();
    if cfg.epochs == 0 || train.is_empty() {
        report.wall_secs = start.elapsed().as_secs_f64();
        return Ok(TrainOutcome { report, best });
    }
    if cfg.batch == 0 {
        return Err(TrainError::ShapeMismatch("batch size must be positive".into()));
    }
    for s in train.iter().chain(val) {
        s.x.expect_shape(model.graph.input_shape())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut grads = model.weights.zeros_like();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_loss = f64::INFINITY;
    let last = model.graph.nodes().len() - 1;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(train.len());
        let mut correct = 0usize;
        let mut any_acc = false;
        for batch in order.chunks(cfg.batch) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let s = &train[i];
                let trace = model.graph.forward(&model.weights, s.x, Mode::Train(&mut rng))?;
                let (l, mut g, ok) = obj.eval(trace.output(), &s.target)?;
                if !l.is_finite() {
                    return Err(TrainError::ShapeMismatch(format!("non-finite loss in epoch {epoch}")));
                }
                losses.push(l);
                if let Some(ok) = ok {
                    any_acc = true;
                    correct += usize::from(ok);
                }
                g.scale(scale);
                model.graph.backward(&model.weights, &trace, last, g, Some(&mut grads), false)?;
            }
            adam.step(&mut model.weights, &grads)?;
        }
        let train_loss = mean(&losses);
        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(model, &obj, val)?;
            (Some(l), a)
        };
        let score = val_loss.unwrap_or(train_loss);
        if score < best_loss {
            best_loss = score;
            best = model.weights.clone();
            report.best_epoch = epoch;
        }
        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            train_acc: any_acc.then(|| correct as f64 / train.len() as f64),
            val_acc,
        });
    }
    report.wall_secs = start.elapsed().as_secs_f64();
    Ok(TrainOutcome { report, best })
}

fn classifier_objective(model: &Model, items: &[(Tensor, usize)]) -> Result<Objective, TrainError> {
    let classes = match model.graph.output_shape() {
        [1] => 2,
        [n] => *n,
        s => return Err(TrainError::ShapeMismatch(format!("classifier output shape {s:?}"))),
    };
    if let Some(&(_, label)) = items.iter().find(|(_, l)| *l >= classes) {
        return Err(TrainError::OutOfRange { label, classes });
    }
    Ok(if classes == 2 && model.graph.output_shape() == [1] {
        Objective::Bce
    } else {
        Objective::Ce(classes)
    })
}

/// Sigmoid-output models use binary cross-entropy with label 1 as the
/// positive class; softmax models use categorical cross-entropy.
pub fn train_classifier(
    model: &mut Model,
    train: &[(Tensor, usize)],
    val: &[(Tensor, usize)],
    cfg: TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let obj = classifier_objective(model, train)?;
    classifier_objective(model, val)?;
    fit(model, obj, &label_samples(train), &label_samples(val), cfg, "classifier")
}

/// Mean-absolute-error training of a translator on `(input, target)` pairs.
pub fn train_unet(model: &mut Model, train: &[Pair], val: &[Pair], cfg: TrainConfig) -> Result<TrainOutcome, TrainError> {
    for (x, y) in train.iter().chain(val) {
        if x.shape() != y.shape() {
            return Err(TrainError::ShapeMismatch(format!("pair shapes {:?} vs {:?}", x.shape(), y.shape())));
        }
    }
    fit(model, Objective::L1, &pair_samples(train), &pair_samples(val), cfg, "unet")
}

/// Starts from `pretrained` (which must have architecture `arch`) and trains
/// on the new pairs. Zero epochs leaves the weights exactly as loaded.
pub fn finetune_unet(
    arch: Arch,
    pretrained: &Model,
    train: &[Pair],
    val: &[Pair],
    cfg: TrainConfig,
) -> Result<(Model, TrainOutcome), TrainError> {
    if pretrained.arch != arch {
        return Err(ModelError::ArchMismatch(format!(
            "pretrained {:?} does not match requested {:?}",
            pretrained.arch, arch
        ))
        .into());
    }
    let mut model = Model::with_weights(arch, pretrained.weights.clone())?;
    let mut outcome = train_unet(&mut model, train, val, cfg)?;
    outcome.report.finetuned = true;
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        for (n, want) in [(10, [7, 2, 1]), (1000, [700, 200, 100]), (11, [7, 2, 2]), (37, [25, 8, 4])] {
            let [a, b, c] = spec.indices(n).unwrap();
            assert_eq!([a.len(), b.len(), c.len()], want, "n={n}");
        }
        assert!(matches!(spec.indices(9), Err(TrainError::TooSmall(9))));
    }

    #[test]
    fn one_hot_cases() {
        assert_eq!(one_hot(2, 4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 2).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(one_hot(4, 4), Err(TrainError::OutOfRange { label: 4, classes: 4 })));
    }

    #[test]
    fn bad_fractions_rejected() {
        let s = SplitSpec {
            train: 0.5,
            val: 0.2,
            test: 0.2,
            seed: 1,
        };
        assert!(matches!(s.indices(100), Err(TrainError::BadSplit(_))));
    }
}
