//! Layer graphs: an ordered list of nodes, each reading the graph input or
//! earlier node outputs. Plain pipelines read the previous node; U-Net skip
//! connections read an earlier encoder node.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::layers::{self, Padding};
use super::tensor::{chw, Float, Tensor};
use super::weights::WeightStore;
use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        padding: Padding,
    },
    MaxPool2d {
        pool: usize,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    Relu,
    Sigmoid,
    Softmax,
    Dropout {
        rate: f64,
    },
    Flatten,
    UpsampleNn,
    /// Channel concatenation of the node's two inputs: `[previous, skip]`.
    ConcatSkip,
}

impl LayerSpec {
    pub fn conv3x3(in_channels: usize, filters: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            filters,
            kernel: 3,
            padding: Padding::Same,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::UpsampleNn => "upsample_nn",
            LayerSpec::ConcatSkip => "concat_skip",
        }
    }

    fn arity(&self) -> usize {
        if matches!(self, LayerSpec::ConcatSkip) {
            2
        } else {
            1
        }
    }

    /// `(name suffix, shape)` of each parameter tensor this layer owns.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => vec![
                ("kernel", vec![filters, in_channels, kernel, kernel]),
                ("bias", vec![filters]),
            ],
            LayerSpec::Dense { inputs, units } => {
                vec![("kernel", vec![units, inputs]), ("bias", vec![units])]
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidLayer(msg));
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                padding,
            } => {
                if in_channels == 0 || filters == 0 || kernel == 0 {
                    return bad("conv2d dimensions must be positive".into());
                }
                if padding == Padding::Same && kernel % 2 == 0 {
                    return bad(format!("same padding needs an odd kernel, got {kernel}"));
                }
            }
            LayerSpec::MaxPool2d { pool: 0 } => return bad("pool size must be positive".into()),
            LayerSpec::Dense { inputs, units } if inputs == 0 || units == 0 => {
                return bad("dense dimensions must be positive".into())
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                return bad(format!("dropout rate {rate} outside [0, 1)"))
            }
            _ => {}
        }
        Ok(())
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, NnError> {
        let x = inputs[0];
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                padding,
            } => {
                let (c, h, w) = chw(x)?;
                if c != in_channels {
                    return Err(NnError::ShapeMismatch(format!(
                        "conv expects {in_channels} channels, input has {c}"
                    )));
                }
                match padding {
                    Padding::Same => Ok(vec![filters, h, w]),
                    Padding::Valid if h >= kernel && w >= kernel => {
                        Ok(vec![filters, h - kernel + 1, w - kernel + 1])
                    }
                    Padding::Valid => Err(NnError::ShapeMismatch(format!(
                        "{h}×{w} input smaller than kernel {kernel}"
                    ))),
                }
            }
            LayerSpec::MaxPool2d { pool } => {
                let (c, h, w) = chw(x)?;
                Ok(vec![c, h.div_ceil(pool), w.div_ceil(pool)])
            }
            LayerSpec::Dense { inputs: n, units } => {
                let len: usize = x.iter().product();
                if len != n {
                    return Err(NnError::ShapeMismatch(format!(
                        "dense expects {n} inputs, got {x:?}"
                    )));
                }
                Ok(vec![units])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Softmax | LayerSpec::Dropout { .. } => {
                Ok(x.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![x.iter().product()]),
            LayerSpec::UpsampleNn => {
                let (c, h, w) = chw(x)?;
                Ok(vec![c, 2 * h, 2 * w])
            }
            LayerSpec::ConcatSkip => {
                let (ca, ha, wa) = chw(x)?;
                let (cb, hb, wb) = chw(inputs[1])?;
                if (ha, wa) != (hb, wb) {
                    return Err(NnError::ShapeMismatch(format!(
                        "skip {:?} does not match {x:?}",
                        inputs[1]
                    )));
                }
                Ok(vec![ca + cb, ha, wa])
            }
        }
    }

    fn describe(&self) -> String {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                padding,
            } => format!("conv2d {in_channels} {filters} {kernel} {padding:?}"),
            LayerSpec::MaxPool2d { pool } => format!("maxpool2d {pool}"),
            LayerSpec::Dense { inputs, units } => format!("dense {inputs} {units}"),
            LayerSpec::Dropout { rate } => format!("dropout {rate}"),
            ref other => other.kind().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub layer: LayerSpec,
    pub inputs: Vec<Source>,
    pub output_shape: Vec<usize>,
}

/// A validated layer graph. The last node is the model output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    nodes: Vec<Node>,
}

/// Incrementally assembles a [`ModelGraph`], checking shapes as it goes.
pub struct GraphBuilder {
    input_shape: Vec<usize>,
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            nodes: Vec::new(),
        }
    }

    /// Appends a node reading the previous node (or the graph input).
    pub fn push(&mut self, name: impl Into<String>, layer: LayerSpec) -> Result<usize, NnError> {
        if layer.arity() == 2 {
            return Err(NnError::InvalidLayer("concat_skip needs an explicit skip source".into()));
        }
        let src = self.last();
        self.push_with(name, layer, vec![src])
    }

    /// Appends a channel concatenation of the previous node with `skip`.
    pub fn concat(&mut self, name: impl Into<String>, skip: usize) -> Result<usize, NnError> {
        let src = self.last();
        self.push_with(name, LayerSpec::ConcatSkip, vec![src, Source::Node(skip)])
    }

    pub fn last(&self) -> Source {
        match self.nodes.len() {
            0 => Source::Input,
            n => Source::Node(n - 1),
        }
    }

    pub fn push_with(
        &mut self,
        name: impl Into<String>,
        layer: LayerSpec,
        inputs: Vec<Source>,
    ) -> Result<usize, NnError> {
        let name = name.into();
        layer.validate()?;
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(NnError::DuplicateName(name));
        }
        if inputs.len() != layer.arity() {
            return Err(NnError::InvalidLayer(format!(
                "{} takes {} input(s)",
                layer.kind(),
                layer.arity()
            )));
        }
        let mut shapes = Vec::with_capacity(inputs.len());
        for src in &inputs {
            shapes.push(match *src {
                Source::Input => self.input_shape.as_slice(),
                Source::Node(j) if j < self.nodes.len() => self.nodes[j].output_shape.as_slice(),
                Source::Node(j) => {
                    return Err(NnError::InvalidLayer(format!("node {name} reads unknown node {j}")))
                }
            });
        }
        let output_shape = layer.output_shape(&shapes)?;
        self.nodes.push(Node {
            name,
            layer,
            inputs,
            output_shape,
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn build(self) -> Result<ModelGraph, NnError> {
        if self.nodes.is_empty() {
            return Err(NnError::InvalidLayer("graph has no nodes".into()));
        }
        Ok(ModelGraph {
            input_shape: self.input_shape,
            nodes: self.nodes,
        })
    }
}

#[derive(Debug, Clone)]
enum Aux<T> {
    None,
    PoolIndices(Vec<usize>),
    Mask(Vec<T>),
}

/// Forward-pass record needed for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub input: Tensor<T>,
    pub outputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
}

impl<T: Float> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("graph has nodes")
    }
}

pub enum Mode<'a> {
    Eval,
    /// Training mode; dropout draws its masks from the given generator.
    Train(&'a mut dyn RngCore),
}

/// Gradients with respect to node outputs (and optionally the graph input).
#[derive(Debug, Clone)]
pub struct NodeGrads<T> {
    pub nodes: Vec<Option<Tensor<T>>>,
    pub input: Option<Tensor<T>>,
}

impl ModelGraph {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.nodes.last().expect("graph has nodes").output_shape
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Parameter names and shapes in canonical order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.layer
                    .param_shapes()
                    .into_iter()
                    .map(move |(suffix, shape)| (format!("{}.{suffix}", n.name), shape))
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// He-uniform kernels (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn init_weights(&self, seed: u64) -> WeightStore<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        for node in &self.nodes {
            let limit = (6.0 / node.layer.fan_in().max(1) as f64).sqrt() as f32;
            for (suffix, shape) in node.layer.param_shapes() {
                let t = if suffix == "kernel" {
                    Tensor::from_fn(&shape, |_| rng.random_range(-limit..limit))
                } else {
                    Tensor::zeros(&shape)
                };
                store
                    .insert(format!("{}.{suffix}", node.name), t)
                    .expect("node names are unique");
            }
        }
        store
    }

    /// Verifies `weights` holds exactly this graph's parameters.
    pub fn check_weights<T: Float>(&self, weights: &WeightStore<T>) -> Result<(), NnError> {
        let layout = self.param_layout();
        if layout.len() != weights.len() {
            return Err(NnError::ShapeMismatch(format!(
                "graph has {} parameter tensors, store has {}",
                layout.len(),
                weights.len()
            )));
        }
        for (name, shape) in layout {
            weights.get(&name)?.expect_shape(&shape)?;
        }
        Ok(())
    }

    /// Canonical text description; two graphs are interchangeable iff these match.
    pub fn describe(&self) -> String {
        let mut s = format!("input {:?}\n", self.input_shape);
        for n in &self.nodes {
            let srcs: Vec<String> = n
                .inputs
                .iter()
                .map(|s| match s {
                    Source::Input => "in".to_string(),
                    Source::Node(j) => j.to_string(),
                })
                .collect();
            let _ = writeln!(s, "{} {} <- {}", n.name, n.layer.describe(), srcs.join(","));
        }
        s
    }

    /// Hex SHA-256 prefix of [`Self::describe`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn forward<T: Float>(
        &self,
        weights: &WeightStore<T>,
        input: &Tensor<T>,
        mut mode: Mode<'_>,
    ) -> Result<Trace<T>, NnError> {
        input.expect_shape(&self.input_shape)?;
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut aux = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let fetch = |src: Source| match src {
                Source::Input => input,
                Source::Node(j) => &outputs[j],
            };
            let x = fetch(node.inputs[0]);
            let (y, a) = match node.layer {
                LayerSpec::Conv2d { padding, .. } => {
                    let k = weights.get(&format!("{}.kernel", node.name))?;
                    let b = weights.get(&format!("{}.bias", node.name))?;
                    (layers::conv2d_forward(x, k, b, padding)?, Aux::None)
                }
                LayerSpec::MaxPool2d { pool } => {
                    let (y, idx) = layers::maxpool2d_forward(x, pool)?;
                    (y, Aux::PoolIndices(idx))
                }
                LayerSpec::Dense { .. } => {
                    let k = weights.get(&format!("{}.kernel", node.name))?;
                    let b = weights.get(&format!("{}.bias", node.name))?;
                    (layers::dense_forward(x, k, b)?, Aux::None)
                }
                LayerSpec::Relu => (layers::relu_forward(x), Aux::None),
                LayerSpec::Sigmoid => (layers::sigmoid_forward(x), Aux::None),
                LayerSpec::Softmax => (layers::softmax_forward(x), Aux::None),
                LayerSpec::Dropout { rate } => match &mut mode {
                    Mode::Train(rng) if rate > 0.0 => {
                        let mask = layers::dropout_mask(x.len(), rate, &mut **rng);
                        (layers::apply_mask(x, &mask)?, Aux::Mask(mask))
                    }
                    _ => (x.clone(), Aux::None),
                },
                LayerSpec::Flatten => (x.clone().reshape(&[x.len()])?, Aux::None),
                LayerSpec::UpsampleNn => (layers::upsample_nn_forward(x)?, Aux::None),
                LayerSpec::ConcatSkip => (layers::concat_forward(x, fetch(node.inputs[1]))?, Aux::None),
            };
            outputs.push(y);
            aux.push(a);
        }
        Ok(Trace {
            input: input.clone(),
            outputs,
            aux,
        })
    }

    /// Eval-mode forward returning only the output.
    pub fn predict<T: Float>(&self, weights: &WeightStore<T>, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut trace = self.forward(weights, input, Mode::Eval)?;
        Ok(trace.outputs.pop().expect("graph has nodes"))
    }

    /// Backpropagates `grad` (the gradient of some scalar with respect to the
    /// output of node `from`) through every node that feeds it.
    ///
    /// Parameter gradients are added into `param_grads` when given.
    pub fn backward<T: Float>(
        &self,
        weights: &WeightStore<T>,
        trace: &Trace<T>,
        from: usize,
        grad: Tensor<T>,
        mut param_grads: Option<&mut WeightStore<T>>,
        need_input_grad: bool,
    ) -> Result<NodeGrads<T>, NnError> {
        if from >= self.nodes.len() {
            return Err(NnError::InvalidLayer(format!("no node {from}")));
        }
        grad.expect_shape(trace.outputs[from].shape())?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        let mut input_grad: Option<Tensor<T>> = None;
        grads[from] = Some(grad);

        for i in (0..=from).rev() {
            let Some(g) = grads[i].as_ref() else { continue };
            let node = &self.nodes[i];
            let fetch = |src: Source| match src {
                Source::Input => &trace.input,
                Source::Node(j) => &trace.outputs[j],
            };
            let wants = |src: Source| need_input_grad || matches!(src, Source::Node(_));
            let x = fetch(node.inputs[0]);
            let y = &trace.outputs[i];
            let mut upstream: Vec<(Source, Tensor<T>)> = Vec::with_capacity(2);
            match node.layer {
                LayerSpec::Conv2d { padding, .. } => {
                    let kname = format!("{}.kernel", node.name);
                    let bname = format!("{}.bias", node.name);
                    let k = weights.get(&kname)?;
                    let b = weights.get(&bname)?;
                    let cg = layers::conv2d_backward(x, k, b, padding, g, wants(node.inputs[0]))?;
                    if let Some(pg) = param_grads.as_deref_mut() {
                        pg.accumulate(&kname, &cg.kernel)?;
                        pg.accumulate(&bname, &cg.bias)?;
                    }
                    if let Some(dx) = cg.input {
                        upstream.push((node.inputs[0], dx));
                    }
                }
                LayerSpec::Dense { .. } => {
                    let kname = format!("{}.kernel", node.name);
                    let bname = format!("{}.bias", node.name);
                    let dg = layers::dense_backward(x, weights.get(&kname)?, g)?;
                    if let Some(pg) = param_grads.as_deref_mut() {
                        pg.accumulate(&kname, &dg.kernel)?;
                        pg.accumulate(&bname, &dg.bias)?;
                    }
                    upstream.push((node.inputs[0], dg.input));
                }
                LayerSpec::MaxPool2d { .. } => {
                    let Aux::PoolIndices(idx) = &trace.aux[i] else {
                        return Err(NnError::InvalidLayer("missing pooling indices".into()));
                    };
                    upstream.push((node.inputs[0], layers::maxpool2d_backward(x.shape(), idx, g)?));
                }
                LayerSpec::Relu => upstream.push((node.inputs[0], layers::relu_backward(x, g)?)),
                LayerSpec::Sigmoid => upstream.push((node.inputs[0], layers::sigmoid_backward(y, g)?)),
                LayerSpec::Softmax => upstream.push((node.inputs[0], layers::softmax_backward(y, g)?)),
                LayerSpec::Dropout { .. } => {
                    let dx = match &trace.aux[i] {
                        Aux::Mask(mask) => layers::apply_mask(g, mask)?,
                        _ => g.clone(),
                    };
                    upstream.push((node.inputs[0], dx));
                }
                LayerSpec::Flatten => upstream.push((node.inputs[0], g.clone().reshape(x.shape())?)),
                LayerSpec::UpsampleNn => {
                    upstream.push((node.inputs[0], layers::upsample_nn_backward(x.shape(), g)?))
                }
                LayerSpec::ConcatSkip => {
                    let skip = fetch(node.inputs[1]);
                    let (ga, gb) = layers::concat_backward(x.shape(), skip.shape(), g)?;
                    upstream.push((node.inputs[0], ga));
                    upstream.push((node.inputs[1], gb));
                }
            }
            for (src, dx) in upstream {
                let slot = match src {
                    Source::Input if need_input_grad => &mut input_grad,
                    Source::Input => continue,
                    Source::Node(j) => &mut grads[j],
                };
                match slot {
                    Some(acc) => acc.add_assign(&dx)?,
                    None => *slot = Some(dx),
                }
            }
        }
        Ok(NodeGrads {
            nodes: grads,
            input: input_grad,
        })
    }
}
