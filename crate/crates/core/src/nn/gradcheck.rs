//! Central-difference verification of the hand-derived backward passes.
//!
//! Checks run in `f64` so that rounding noise stays far below the
//! truncation error of the difference quotient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Mode, ModelGraph};
use super::tensor::Tensor;
use super::weights::WeightStore;
use super::NnError;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Upper bound on checked coordinates; larger sets are sampled.
    pub max_coords: usize,
    /// Seed for the loss projection and coordinate sampling.
    pub seed: u64,
    /// Run dropout in training mode with a mask fixed by this seed.
    pub dropout_seed: Option<u64>,
    /// Also check the gradient with respect to the graph input.
    pub check_input: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            max_coords: 400,
            seed: 0,
            dropout_seed: None,
            check_input: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Coordinate with the largest error, e.g. `"conv1.kernel[3]"`.
    pub worst: String,
}

pub type ScalarLoss<'a> = dyn Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>), NnError> + 'a;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks with the scalar `Σ output ⊙ R` for a fixed random `R ∈ [-1, 1]`.
pub fn gradient_check(
    graph: &ModelGraph,
    weights: &WeightStore<f32>,
    input: &Tensor<f32>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let proj = Tensor::<f64>::from_fn(graph.output_shape(), |_| rng.random_range(-1.0..1.0));
    let loss = move |out: &Tensor<f64>| -> Result<(f64, Tensor<f64>), NnError> {
        out.expect_shape(proj.shape())?;
        let v = out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum();
        Ok((v, proj.clone()))
    };
    gradient_check_with_loss(graph, weights, input, &loss, cfg)
}

/// Checks the gradient of `loss(graph(input))` with respect to every
/// parameter (and optionally the input), sampling coordinates when there
/// are more than `cfg.max_coords`.
pub fn gradient_check_with_loss(
    graph: &ModelGraph,
    weights: &WeightStore<f32>,
    input: &Tensor<f32>,
    loss: &ScalarLoss<'_>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, NnError> {
    let mut params: WeightStore<f64> = weights.cast();
    let mut x: Tensor<f64> = input.cast();

    let eval = |params: &WeightStore<f64>, x: &Tensor<f64>| -> Result<f64, NnError> {
        let out = run(graph, params, x, cfg.dropout_seed)?;
        Ok(loss(out.output())?.0)
    };

    let trace = run(graph, &params, &x, cfg.dropout_seed)?;
    let (_, dout) = loss(trace.output())?;
    let mut pgrads = params.zeros_like();
    let last = graph.nodes().len() - 1;
    let node_grads = graph.backward(&params, &trace, last, dout, Some(&mut pgrads), cfg.check_input)?;

    // (tensor name or None for the input, flat index)
    let mut coords: Vec<(Option<String>, usize)> = Vec::new();
    for (name, t) in params.iter() {
        coords.extend((0..t.len()).map(|i| (Some(name.to_string()), i)));
    }
    if cfg.check_input {
        coords.extend((0..x.len()).map(|i| (None, i)));
    }
    if coords.len() > cfg.max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc00d);
        for i in 0..cfg.max_coords {
            let j = rng.random_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(cfg.max_coords);
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: coords.len(),
        worst: String::new(),
    };
    for (name, i) in coords {
        let analytic = match &name {
            Some(n) => pgrads.get(n)?.data()[i],
            None => node_grads
                .input
                .as_ref()
                .map_or(0.0, |g| g.data()[i]),
        };
        let numeric = {
            let nudge = |params: &mut WeightStore<f64>, x: &mut Tensor<f64>, delta: f64| -> Result<(), NnError> {
                match &name {
                    Some(n) => params.get_mut(n)?.data_mut()[i] += delta,
                    None => x.data_mut()[i] += delta,
                }
                Ok(())
            };
            nudge(&mut params, &mut x, cfg.h)?;
            let plus = eval(&params, &x)?;
            nudge(&mut params, &mut x, -2.0 * cfg.h)?;
            let minus = eval(&params, &x)?;
            nudge(&mut params, &mut x, cfg.h)?;
            (plus - minus) / (2.0 * cfg.h)
        };
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = format!("{}[{i}]", name.as_deref().unwrap_or("input"));
        }
    }
    Ok(report)
}

fn run(
    graph: &ModelGraph,
    params: &WeightStore<f64>,
    x: &Tensor<f64>,
    dropout_seed: Option<u64>,
) -> Result<super::graph::Trace<f64>, NnError> {
    match dropout_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            graph.forward(params, x, Mode::Train(&mut rng))
        }
        None => graph.forward(params, x, Mode::Eval),
    }
}
