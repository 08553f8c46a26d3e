//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use dyslab_core::nn::gradcheck::{gradient_check, gradient_check_with_loss, GradCheckConfig};
use dyslab_core::nn::loss::loss_ce;
use dyslab_core::models::{Arch, DetectorConfig, Model};
use dyslab_core::nn::{GraphBuilder, LayerSpec, ModelGraph, NnError, Padding, Source, Tensor, WeightStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-3;
pub const GRAD_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Input values bounded away from zero, so ReLU kinks sit outside the
/// finite-difference stencil.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f32 = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Distinct values spaced ≥ 0.05 apart, so no pooling window has a near-tie.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f32> = (0..n).map(|i| i as f32 * 0.05 - n as f32 * 0.025).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).unwrap()
}

fn graph(input: &[usize], layers: Vec<(&str, LayerSpec)>) -> ModelGraph {
    let mut b = GraphBuilder::new(input);
    for (name, l) in layers {
        b.push(name, l).unwrap();
    }
    b.build().unwrap()
}

/// Runs one layer's finite-difference check on `seed`; returns the worst
/// relative error over parameters and input.
pub fn layer_grad_error(layer: &str, seed: u64) -> Result<f64, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    let report = match layer {
        "conv2d" => {
            let g = graph(&[2, 5, 5], vec![("c", LayerSpec::conv3x3(2, 3))]);
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[2, 5, 5], &mut rng), &cfg)?
        }
        "conv2d_valid" => {
            let l = LayerSpec::Conv2d {
                in_channels: 2,
                filters: 2,
                kernel: 3,
                padding: Padding::Valid,
            };
            let g = graph(&[2, 6, 5], vec![("c", l)]);
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[2, 6, 5], &mut rng), &cfg)?
        }
        "maxpool" => {
            let g = graph(&[2, 5, 4], vec![("p", LayerSpec::MaxPool2d { pool: 2 })]);
            gradient_check(&g, &g.init_weights(seed), &distinct(&[2, 5, 4], &mut rng), &cfg)?
        }
        "dense" => {
            let g = graph(&[7], vec![("d", LayerSpec::Dense { inputs: 7, units: 4 })]);
            let mut w = g.init_weights(seed);
            for v in w.get_mut("d.bias")?.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
            gradient_check(&g, &w, &away_from_zero(&[7], &mut rng), &cfg)?
        }
        "relu" => {
            let g = graph(&[12], vec![("r", LayerSpec::Relu)]);
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[12], &mut rng), &cfg)?
        }
        "sigmoid" => {
            let g = graph(&[12], vec![("s", LayerSpec::Sigmoid)]);
            let x = Tensor::from_fn(&[12], |_| rng.random_range(-4.0..4.0));
            gradient_check(&g, &g.init_weights(seed), &x, &cfg)?
        }
        "softmax_ce" => {
            let g = graph(
                &[6],
                vec![("d", LayerSpec::Dense { inputs: 6, units: 5 }), ("s", LayerSpec::Softmax)],
            );
            let label = rng.random_range(0..5);
            let target = Tensor::<f64>::from_fn(&[5], |i| if i == label { 1.0 } else { 0.0 });
            let loss = move |out: &Tensor<f64>| loss_ce(out, &target);
            let x = Tensor::from_fn(&[6], |_| rng.random_range(-1.0..1.0));
            gradient_check_with_loss(&g, &g.init_weights(seed), &x, &loss, &cfg)?
        }
        "dropout_eval" => {
            let g = graph(&[10], vec![("dr", LayerSpec::Dropout { rate: 0.5 })]);
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[10], &mut rng), &cfg)?
        }
        "dropout_train" => {
            let g = graph(&[10], vec![("dr", LayerSpec::Dropout { rate: 0.3 })]);
            let cfg = GradCheckConfig {
                dropout_seed: Some(seed),
                ..cfg
            };
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[10], &mut rng), &cfg)?
        }
        "upsample" => {
            let g = graph(&[2, 3, 4], vec![("u", LayerSpec::UpsampleNn)]);
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[2, 3, 4], &mut rng), &cfg)?
        }
        "concat" => {
            let mut b = GraphBuilder::new(&[1, 4, 4]);
            let a = b.push_with("a", LayerSpec::conv3x3(1, 2), vec![Source::Input]).unwrap();
            b.push_with("b", LayerSpec::conv3x3(1, 3), vec![Source::Input]).unwrap();
            b.concat("cat", a).unwrap();
            b.push("mix", LayerSpec::conv3x3(5, 2)).unwrap();
            let g = b.build().unwrap();
            gradient_check(&g, &g.init_weights(seed), &away_from_zero(&[1, 4, 4], &mut rng), &cfg)?
        }
        other => panic!("unknown layer {other}"),
    };
    Ok(report.max_rel_error)
}

pub const GRAD_LAYERS: [&str; 11] = [
    "conv2d",
    "conv2d_valid",
    "maxpool",
    "dense",
    "relu",
    "sigmoid",
    "softmax_ce",
    "dropout_eval",
    "dropout_train",
    "upsample",
    "concat",
];

/// `(reference, hypothesis, edits, reference words)`, counted by hand.
pub const WER_TABLE: [(&str, &str, usize, usize); 14] = [
    ("the cat sat", "the cat sat", 0, 3),
    ("the snow blew into large drifts", "the snow flew into large drifts", 1, 6),
    ("a b c d", "", 4, 4),
    ("the cat sat on the mat", "the cat sat on mat", 1, 6),
    ("hello world", "hello big world", 1, 2),
    ("Hello, World!", "hello world", 0, 2),
    ("I [laughs] am here", "i am here", 0, 3),
    ("[noise] go home", "go home now", 1, 2),
    ("don't stop", "dont stop", 1, 2),
    ("one two three four", "four three two one", 4, 4),
    ("the quick brown fox", "quick brown fox jumps", 2, 4),
    ("yes", "no no no", 3, 1),
    ("[inaudible]", "", 0, 0),
    ("it's fine", "it’s fine", 0, 2),
];

/// Expected WER of a table row; both-empty rows are 0.
pub fn table_wer(edits: usize, words: usize) -> f64 {
    if words == 0 {
        0.0
    } else {
        edits as f64 / words as f64
    }
}

/// Side of the Grad-CAM fixture's input.
pub const S: usize = 8;

/// conv(1→2) [→ relu] → flatten → dense(2·S² → 2) → softmax, where logit 0
/// is the spatial mean of feature map 0 and logit 1 reads map 1 only.
pub fn mean_of_map_model(relu: bool, seed: u64) -> Model {
    let mut g = GraphBuilder::new(&[1, S, S]);
    g.push("conv", LayerSpec::conv3x3(1, 2)).unwrap();
    if relu {
        g.push("relu", LayerSpec::Relu).unwrap();
    }
    g.push("flatten", LayerSpec::Flatten).unwrap();
    g.push("dense", LayerSpec::Dense { inputs: 2 * S * S, units: 2 }).unwrap();
    g.push("softmax", LayerSpec::Softmax).unwrap();
    let graph = g.build().unwrap();
    let mut weights: WeightStore = graph.init_weights(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in weights.get_mut("conv.bias").unwrap().data_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    let hw = S * S;
    let k = weights.get_mut("dense.kernel").unwrap().data_mut();
    for (i, v) in k.iter_mut().enumerate() {
        let (unit, input) = (i / (2 * hw), i % (2 * hw));
        *v = match (unit, input < hw) {
            (0, true) => 1.0 / hw as f32,
            (1, false) => rng.random_range(-1.0..1.0),
            _ => 0.0,
        };
    }
    Model {
        // grad_cam reads only the graph and weights
        arch: Arch::Detector(DetectorConfig { size: S }),
        graph,
        weights,
    }
}

/// Channel 0 of a zero-padded 3×3 cross-correlation, computed directly.
pub fn map0(model: &Model, x: &Tensor) -> Vec<f64> {
    let k = model.weights.get("conv.kernel").unwrap().data();
    let b = model.weights.get("conv.bias").unwrap().data()[0] as f64;
    let px = |i: isize, j: isize| {
        if (0..S as isize).contains(&i) && (0..S as isize).contains(&j) {
            x.data()[i as usize * S + j as usize] as f64
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(S * S);
    for i in 0..S as isize {
        for j in 0..S as isize {
            let mut acc = b;
            for di in 0..3 {
                for dj in 0..3 {
                    acc += k[(di * 3 + dj) as usize] as f64 * px(i + di - 1, j + dj - 1);
                }
            }
            out.push(acc);
        }
    }
    out
}

pub fn normalized_relu(a: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = a.iter().map(|v| v.max(0.0)).collect();
    let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi <= lo {
        return vec![0.0; r.len()];
    }
    r.iter().map(|v| (v - lo) / (hi - lo)).collect()
}
