//! The three architectures — binary detector, severity classifier, U-Net
//! translator — plus prediction decoding and weight files with manifests.
//!
//! A saved model is two files: the DYSW weights and a plain-text sidecar
//! (same stem, `.manifest` extension) of `key value` lines naming the
//! architecture, its config and the graph's config hash.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::nn::serialize::{load_weights, save_weights};
use crate::nn::{GraphBuilder, LayerSpec, ModelGraph, NnError, Padding, Tensor, WeightStore};

pub const DEFAULT_SEED: u64 = 1337;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("bad manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorConfig {
    pub size: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { size: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeverityConfig {
    pub size: usize,
}

impl Default for SeverityConfig {
    fn default() -> Self {
        Self { size: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub size: usize,
    /// Filters at the first encoder level; doubled at each level below.
    pub base: usize,
    /// Number of encoder (and decoder) levels.
    pub depth: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            size: 128,
            base: 32,
            depth: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Detector(DetectorConfig),
    Severity(SeverityConfig),
    UNet(UNetConfig),
}

impl Arch {
    pub fn tag(&self) -> &'static str {
        match self {
            Arch::Detector(_) => "detector",
            Arch::Severity(_) => "severity",
            Arch::UNet(_) => "unet",
        }
    }

    fn config_pairs(&self) -> Vec<(&'static str, usize)> {
        match *self {
            Arch::Detector(c) => vec![("size", c.size)],
            Arch::Severity(c) => vec![("size", c.size)],
            Arch::UNet(c) => vec![("size", c.size), ("base", c.base), ("depth", c.depth)],
        }
    }

    pub fn build(&self) -> Result<ModelGraph, ModelError> {
        match *self {
            Arch::Detector(c) => build_detector(c),
            Arch::Severity(c) => build_severity(c),
            Arch::UNet(c) => build_unet(c),
        }
    }
}

fn check_pow2_size(size: usize, levels: usize) -> Result<(), ModelError> {
    let step = 1usize << levels;
    if size == 0 || !size.is_multiple_of(step) {
        return Err(ModelError::Config(format!("input size {size} must be a positive multiple of {step}")));
    }
    Ok(())
}

/// `conv16 → pool → conv32 → pool → dense32 → dense1 → sigmoid`.
pub fn build_detector(c: DetectorConfig) -> Result<ModelGraph, ModelError> {
    check_pow2_size(c.size, 2)?;
    let mut g = GraphBuilder::new(&[1, c.size, c.size]);
    g.push("conv1", LayerSpec::conv3x3(1, 16))?;
    g.push("relu1", LayerSpec::Relu)?;
    g.push("pool1", LayerSpec::MaxPool2d { pool: 2 })?;
    g.push("conv2", LayerSpec::conv3x3(16, 32))?;
    g.push("relu2", LayerSpec::Relu)?;
    g.push("pool2", LayerSpec::MaxPool2d { pool: 2 })?;
    g.push("flatten", LayerSpec::Flatten)?;
    let s = c.size / 4;
    g.push(
        "dense1",
        LayerSpec::Dense {
            inputs: 32 * s * s,
            units: 32,
        },
    )?;
    g.push("relu3", LayerSpec::Relu)?;
    g.push("dense2", LayerSpec::Dense { inputs: 32, units: 1 })?;
    g.push("sigmoid", LayerSpec::Sigmoid)?;
    Ok(g.build()?)
}

/// `(conv → relu → pool) × {32, 64, 128} → dropout 0.5 → dense128 → dense4 → softmax`.
pub fn build_severity(c: SeverityConfig) -> Result<ModelGraph, ModelError> {
    check_pow2_size(c.size, 3)?;
    let mut g = GraphBuilder::new(&[1, c.size, c.size]);
    let mut ch = 1;
    for (i, filters) in [32, 64, 128].into_iter().enumerate() {
        g.push(format!("conv{}", i + 1), LayerSpec::conv3x3(ch, filters))?;
        g.push(format!("relu{}", i + 1), LayerSpec::Relu)?;
        g.push(format!("pool{}", i + 1), LayerSpec::MaxPool2d { pool: 2 })?;
        ch = filters;
    }
    let s = c.size / 8;
    g.push("flatten", LayerSpec::Flatten)?;
    g.push("dropout", LayerSpec::Dropout { rate: 0.5 })?;
    g.push(
        "dense1",
        LayerSpec::Dense {
            inputs: 128 * s * s,
            units: 128,
        },
    )?;
    g.push("relu4", LayerSpec::Relu)?;
    g.push("dense2", LayerSpec::Dense { inputs: 128, units: 4 })?;
    g.push("softmax", LayerSpec::Softmax)?;
    Ok(g.build()?)
}

/// Encoder levels of two conv+relu then pool; bottleneck of two conv+relu;
/// decoder levels of upsample → conv+relu → concat skip → two conv+relu;
/// 1×1 conv + sigmoid head.
pub fn build_unet(c: UNetConfig) -> Result<ModelGraph, ModelError> {
    if c.depth == 0 || c.base == 0 {
        return Err(ModelError::Config("unet base and depth must be positive".into()));
    }
    check_pow2_size(c.size, c.depth)?;
    let mut g = GraphBuilder::new(&[1, c.size, c.size]);
    let mut ch = 1;
    let mut skips = Vec::with_capacity(c.depth);
    let double_conv = |g: &mut GraphBuilder, prefix: &str, cin: usize, cout: usize| -> Result<usize, NnError> {
        g.push(format!("{prefix}_conv_a"), LayerSpec::conv3x3(cin, cout))?;
        g.push(format!("{prefix}_relu_a"), LayerSpec::Relu)?;
        g.push(format!("{prefix}_conv_b"), LayerSpec::conv3x3(cout, cout))?;
        g.push(format!("{prefix}_relu_b"), LayerSpec::Relu)
    };
    for level in 0..c.depth {
        let f = c.base << level;
        skips.push(double_conv(&mut g, &format!("enc{level}"), ch, f)?);
        g.push(format!("enc{level}_pool"), LayerSpec::MaxPool2d { pool: 2 })?;
        ch = f;
    }
    let f = c.base << c.depth;
    double_conv(&mut g, "bottleneck", ch, f)?;
    ch = f;
    for level in (0..c.depth).rev() {
        let f = c.base << level;
        g.push(format!("dec{level}_up"), LayerSpec::UpsampleNn)?;
        g.push(format!("dec{level}_up_conv"), LayerSpec::conv3x3(ch, f))?;
        g.push(format!("dec{level}_up_relu"), LayerSpec::Relu)?;
        g.concat(format!("dec{level}_concat"), skips[level])?;
        double_conv(&mut g, &format!("dec{level}"), 2 * f, f)?;
        ch = f;
    }
    g.push(
        "head",
        LayerSpec::Conv2d {
            in_channels: ch,
            filters: 1,
            kernel: 1,
            padding: Padding::Same,
        },
    )?;
    g.push("sigmoid", LayerSpec::Sigmoid)?;
    Ok(g.build()?)
}

/// A graph together with its weights.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Arch,
    pub graph: ModelGraph,
    pub weights: WeightStore,
}

impl Model {
    /// Fresh model with He-initialized weights drawn from `seed`.
    ///
    /// Classifier heads (the final dense kernel) start at zero so an untrained
    /// classifier outputs the uniform distribution instead of whatever the
    /// random features happen to favour; the U-Net keeps He everywhere.
    pub fn new(arch: Arch, seed: u64) -> Result<Self, ModelError> {
        let graph = arch.build()?;
        let mut weights = graph.init_weights(seed);
        if matches!(arch, Arch::Detector(_) | Arch::Severity(_)) {
            weights.get_mut("dense2.kernel")?.data_mut().fill(0.0);
        }
        Ok(Self { arch, graph, weights })
    }

    pub fn with_weights(arch: Arch, weights: WeightStore) -> Result<Self, ModelError> {
        let graph = arch.build()?;
        graph
            .check_weights(&weights)
            .map_err(|e| ModelError::ArchMismatch(format!("weights do not fit {}: {e}", arch.tag())))?;
        Ok(Self { arch, graph, weights })
    }

    pub fn manifest_text(&self) -> String {
        let mut s = format!("arch {}\n", self.arch.tag());
        for (k, v) in self.arch.config_pairs() {
            s.push_str(&format!("{k} {v}\n"));
        }
        s.push_str(&format!("config_hash {}\n", self.graph.config_hash()));
        s
    }

    /// Writes the weights to `path` and the manifest next to it.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        save_weights(&self.weights, path)?;
        let mpath = manifest_path(path);
        fs::write(&mpath, self.manifest_text()).map_err(|source| ModelError::Io { path: mpath, source })
    }

    /// Loads weights and manifest. With `expected`, any other architecture
    /// is an [`ModelError::ArchMismatch`].
    pub fn load(path: &Path, expected: Option<ArchKind>) -> Result<Self, ModelError> {
        let arch = read_manifest(&manifest_path(path))?;
        if let Some(kind) = expected {
            if kind != ArchKind::of(&arch) {
                return Err(ModelError::ArchMismatch(format!(
                    "{} holds a {} model, expected {}",
                    path.display(),
                    arch.tag(),
                    kind
                )));
            }
        }
        let weights = load_weights(path)?;
        Self::with_weights(arch, weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Detector,
    Severity,
    UNet,
}

impl ArchKind {
    pub fn of(arch: &Arch) -> Self {
        match arch {
            Arch::Detector(_) => ArchKind::Detector,
            Arch::Severity(_) => ArchKind::Severity,
            Arch::UNet(_) => ArchKind::UNet,
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Detector => "detector",
            ArchKind::Severity => "severity",
            ArchKind::UNet => "unet",
        })
    }
}

pub fn manifest_path(weights: &Path) -> PathBuf {
    weights.with_extension("manifest")
}

/// Parses a manifest and checks its hash against the architecture it names.
pub fn read_manifest(path: &Path) -> Result<Arch, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: String| ModelError::Manifest {
        path: path.to_path_buf(),
        msg,
    };
    let mut kv = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
        if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(bad(format!("duplicate key {k:?}")));
        }
    }
    let num = |k: &str| -> Result<usize, ModelError> {
        kv.get(k)
            .ok_or_else(|| bad(format!("missing key {k:?}")))?
            .parse()
            .map_err(|_| bad(format!("{k} is not a number")))
    };
    let arch = match kv.get("arch").map(String::as_str) {
        Some("detector") => Arch::Detector(DetectorConfig { size: num("size")? }),
        Some("severity") => Arch::Severity(SeverityConfig { size: num("size")? }),
        Some("unet") => Arch::UNet(UNetConfig {
            size: num("size")?,
            base: num("base")?,
            depth: num("depth")?,
        }),
        Some(other) => return Err(bad(format!("unknown arch {other:?}"))),
        None => return Err(bad("missing key \"arch\"".into())),
    };
    let hash = kv.get("config_hash").ok_or_else(|| bad("missing key \"config_hash\"".into()))?;
    let actual = arch.build()?.config_hash();
    if *hash != actual {
        return Err(ModelError::ArchMismatch(format!(
            "manifest hash {hash} does not match {} graph {actual}",
            arch.tag()
        )));
    }
    Ok(arch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    Dysarthric,
    NonDysarthric,
}

impl Detection {
    pub fn as_str(self) -> &'static str {
        match self {
            Detection::Dysarthric => "dysarthric",
            Detection::NonDysarthric => "non_dysarthric",
        }
    }
}

/// `Dysarthric` iff `p ≥ threshold`.
pub fn decode(p: f32, threshold: f32) -> Detection {
    if p >= threshold {
        Detection::Dysarthric
    } else {
        Detection::NonDysarthric
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeverityLabel {
    VeryLow = 0,
    Low = 1,
    Medium = 2,
    High = 3,
}

impl SeverityLabel {
    pub const ALL: [SeverityLabel; 4] = [Self::VeryLow, Self::Low, Self::Medium, Self::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VeryLow => "very_low",
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_label(scores: &[f32]) -> SeverityLabel {
    assert_eq!(scores.len(), 4, "severity scores have four entries");
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    SeverityLabel::from_index(best).expect("index < 4")
}

fn expect_kind(model: &Model, kind: ArchKind) -> Result<(), ModelError> {
    if ArchKind::of(&model.arch) != kind {
        return Err(ModelError::ArchMismatch(format!("expected a {kind} model, got {}", model.arch.tag())));
    }
    Ok(())
}

/// Probability that the input is dysarthric.
pub fn predict_detector(model: &Model, image: &Tensor) -> Result<f32, ModelError> {
    expect_kind(model, ArchKind::Detector)?;
    Ok(model.graph.predict(&model.weights, image)?.data()[0])
}

/// Class probabilities in [`SeverityLabel`] order.
pub fn predict_severity(model: &Model, image: &Tensor) -> Result<[f32; 4], ModelError> {
    expect_kind(model, ArchKind::Severity)?;
    let out = model.graph.predict(&model.weights, image)?;
    Ok(out.data().try_into().expect("four outputs"))
}

/// Eval-mode U-Net forward pass.
pub fn translate_spectrogram(model: &Model, image: &Tensor) -> Result<Tensor, ModelError> {
    expect_kind(model, ArchKind::UNet)?;
    Ok(model.graph.predict(&model.weights, image)?)
}
