//! Forward and backward kernels for every layer kind.
//!
//! Image tensors are `[C, H, W]`, row-major. All convolutions have stride 1.
//! Backward functions take the upstream gradient and return gradients with
//! respect to each forward input (and parameters, where present).

use rand::{Rng, RngCore};

use super::tensor::{chw, Float, Tensor};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero-pad so the output keeps the input's H×W (odd kernels only).
    Same,
    /// No padding; each axis shrinks by `kernel - 1`.
    Valid,
}

impl Padding {
    fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Same => (kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }
}

fn conv_out_dims(h: usize, w: usize, kernel: usize, padding: Padding) -> Result<(usize, usize), NnError> {
    match padding {
        Padding::Same => {
            if kernel.is_multiple_of(2) {
                return Err(NnError::ShapeMismatch(format!(
                    "same padding needs an odd kernel, got {kernel}"
                )));
            }
            Ok((h, w))
        }
        Padding::Valid => {
            if h < kernel || w < kernel {
                return Err(NnError::ShapeMismatch(format!(
                    "{h}×{w} input is smaller than a {kernel}×{kernel} kernel"
                )));
            }
            Ok((h - kernel + 1, w - kernel + 1))
        }
    }
}

/// Unfolds `x` into a `[C·k·k, H'·W']` patch matrix.
fn im2col<T: Float>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    kernel: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let mut cols = vec![T::zero(); c * kernel * kernel * oh * ow];
    let mut row = 0;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                // output column ox reads input column ox + kj - pad
                let ox_lo = pad.saturating_sub(kj).min(ow);
                let ox_hi = (w + pad).saturating_sub(kj).min(ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let src_row = &plane[(iy - pad) * w..(iy - pad + 1) * w];
                    let ix_lo = ox_lo + kj - pad;
                    let len = ox_hi - ox_lo;
                    dst[oy * ow + ox_lo..oy * ow + ox_hi].copy_from_slice(&src_row[ix_lo..ix_lo + len]);
                }
            }
        }
    }
    cols
}

/// Folds a patch-matrix gradient back onto the input grid (adjoint of [`im2col`]).
fn col2im<T: Float>(
    cols: &[T],
    (c, h, w): (usize, usize, usize),
    kernel: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let mut x = vec![T::zero(); c * h * w];
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                let ox_lo = pad.saturating_sub(kj).min(ow);
                let ox_hi = (w + pad).saturating_sub(kj).min(ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let ix_lo = ox_lo + kj - pad;
                    let dst_row = &mut plane[(iy - pad) * w + ix_lo..(iy - pad) * w + ix_lo + (ox_hi - ox_lo)];
                    for (d, &s) in dst_row.iter_mut().zip(&src[oy * ow + ox_lo..oy * ow + ox_hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}

fn check_conv_params<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<((usize, usize, usize), usize, usize), NnError> {
    let dims = chw(x.shape())?;
    let [filters, in_ch, kh, kw] = *kernel.shape() else {
        return Err(NnError::ShapeMismatch(format!(
            "conv kernel must be 4-D, got {:?}",
            kernel.shape()
        )));
    };
    if kh != kw || in_ch != dims.0 || bias.shape() != [filters] {
        return Err(NnError::ShapeMismatch(format!(
            "conv kernel {:?} / bias {:?} incompatible with input {:?}",
            kernel.shape(),
            bias.shape(),
            x.shape()
        )));
    }
    Ok((dims, filters, kh))
}

pub fn conv2d_forward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>, NnError> {
    let (dims, filters, k) = check_conv_params(x, kernel, bias)?;
    let (oh, ow) = conv_out_dims(dims.1, dims.2, k, padding)?;
    let cols = im2col(x.data(), dims, k, padding.amount(k), (oh, ow));
    let mut out = Vec::with_capacity(filters * oh * ow);
    for &b in bias.data() {
        out.extend(std::iter::repeat_n(b, oh * ow));
    }
    T::gemm(
        filters,
        dims.0 * k * k,
        oh * ow,
        T::one(),
        kernel.data(),
        false,
        &cols,
        false,
        T::one(),
        &mut out,
    );
    Tensor::new(vec![filters, oh, ow], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of [`conv2d_forward`]. The patch matrix is rebuilt from `x`
/// instead of being cached, which keeps activation memory low.
pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>, NnError> {
    let (dims, filters, k) = check_conv_params(x, kernel, bias)?;
    let (oh, ow) = conv_out_dims(dims.1, dims.2, k, padding)?;
    grad_out.expect_shape(&[filters, oh, ow])?;
    let pad = padding.amount(k);
    let patch = dims.0 * k * k;
    let cols = im2col(x.data(), dims, k, pad, (oh, ow));
    let g = grad_out.data();

    let mut dk = vec![T::zero(); filters * patch];
    T::gemm(filters, oh * ow, patch, T::one(), g, false, &cols, true, T::zero(), &mut dk);
    let db: Vec<T> = g.chunks(oh * ow).map(|row| row.iter().copied().sum()).collect();

    let input = if need_input {
        let mut dcols = cols;
        T::gemm(patch, filters, oh * ow, T::one(), kernel.data(), true, g, false, T::zero(), &mut dcols);
        Some(Tensor::new(x.shape().to_vec(), col2im(&dcols, dims, k, pad, (oh, ow)))?)
    } else {
        None
    };
    Ok(ConvGrads {
        input,
        kernel: Tensor::new(kernel.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![filters], db)?,
    })
}

/// Max pooling with a square window and stride equal to the window.
///
/// Odd extents are padded on the right/bottom with −∞. Returns the pooled
/// tensor and, per output cell, the flat input index of the first
/// (row-major) maximal element of its window.
pub fn maxpool2d_forward<T: Float>(x: &Tensor<T>, pool: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    let (c, h, w) = chw(x.shape())?;
    if pool == 0 {
        return Err(NnError::ShapeMismatch("pool size must be positive".into()));
    }
    let (oh, ow) = (h.div_ceil(pool), w.div_ceil(pool));
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = usize::MAX;
                let mut best_v = T::neg_infinity();
                for iy in oy * pool..((oy + 1) * pool).min(h) {
                    for ix in ox * pool..((ox + 1) * pool).min(w) {
                        let i = base + iy * w + ix;
                        if best == usize::MAX || xd[i] > best_v {
                            best = i;
                            best_v = xd[i];
                        }
                    }
                }
                out.push(best_v);
                idx.push(best);
            }
        }
    }
    let shape = if x.shape().len() == 3 { vec![c, oh, ow] } else { vec![oh, ow] };
    Ok((Tensor::new(shape, out)?, idx))
}

pub fn maxpool2d_backward<T: Float>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if argmax.len() != grad_out.len() {
        return Err(NnError::ShapeMismatch("pooling indices do not match gradient".into()));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// `y = W·x + b` with `W: [units, inputs]`; `x` may have any shape holding `inputs` values.
pub fn dense_forward<T: Float>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let [units, inputs] = *kernel.shape() else {
        return Err(NnError::ShapeMismatch(format!("dense kernel must be 2-D, got {:?}", kernel.shape())));
    };
    if x.len() != inputs || bias.shape() != [units] {
        return Err(NnError::ShapeMismatch(format!(
            "dense {inputs}→{units} cannot take input {:?}",
            x.shape()
        )));
    }
    let mut out = bias.data().to_vec();
    T::gemm(units, inputs, 1, T::one(), kernel.data(), false, x.data(), false, T::one(), &mut out);
    Tensor::new(vec![units], out)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Float>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>, NnError> {
    let [units, inputs] = *kernel.shape() else {
        return Err(NnError::ShapeMismatch("dense kernel must be 2-D".into()));
    };
    if x.len() != inputs || grad_out.len() != units {
        return Err(NnError::ShapeMismatch("dense gradient shape mismatch".into()));
    }
    let mut dk = vec![T::zero(); units * inputs];
    T::gemm(units, 1, inputs, T::one(), grad_out.data(), false, x.data(), false, T::zero(), &mut dk);
    let mut dx = vec![T::zero(); inputs];
    T::gemm(inputs, units, 1, T::one(), kernel.data(), true, grad_out.data(), false, T::zero(), &mut dx);
    Ok(DenseGrads {
        input: Tensor::new(x.shape().to_vec(), dx)?,
        kernel: Tensor::new(vec![units, inputs], dk)?,
        bias: grad_out.clone().reshape(&[units])?,
    })
}

pub fn relu_forward<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Float>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    grad_out.expect_shape(x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_forward<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Uses the forward output `y`: `dx = dy · y · (1 − y)`.
pub fn sigmoid_backward<T: Float>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    grad_out.expect_shape(y.shape())?;
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

/// Softmax over all elements of `x`.
pub fn softmax_forward<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let max = x.data().iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::new(x.shape().to_vec(), exps.into_iter().map(|e| e / total).collect()).expect("same shape")
}

/// Uses the forward output `y`: `dx = y ⊙ (dy − ⟨dy, y⟩)`.
pub fn softmax_backward<T: Float>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    grad_out.expect_shape(y.shape())?;
    let dot: T = y.data().iter().zip(grad_out.data()).map(|(&a, &b)| a * b).sum();
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| s * (g - dot))
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else `1/(1−rate)`.
pub fn dropout_mask<T: Float>(len: usize, rate: f64, rng: &mut dyn RngCore) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

pub fn apply_mask<T: Float>(x: &Tensor<T>, mask: &[T]) -> Result<Tensor<T>, NnError> {
    if mask.len() != x.len() {
        return Err(NnError::ShapeMismatch("dropout mask length mismatch".into()));
    }
    let data = x.data().iter().zip(mask).map(|(&v, &m)| v * m).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Doubles H and W by pixel duplication.
pub fn upsample_nn_forward<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (c, h, w) = chw(x.shape())?;
    let (oh, ow) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            let row = &xd[ch * h * w + (oy / 2) * w..ch * h * w + (oy / 2 + 1) * w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn upsample_nn_backward<T: Float>(input_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (c, h, w) = chw(input_shape)?;
    grad_out.expect_shape(&[c, 2 * h, 2 * w])?;
    let g = grad_out.data();
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    let ow = 2 * w;
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let o = ch * 4 * h * w + 2 * y * ow + 2 * x;
                d[ch * h * w + y * w + x] = g[o] + g[o + 1] + g[o + ow] + g[o + ow + 1];
            }
        }
    }
    Ok(dx)
}

/// Concatenates two `[C, H, W]` tensors along channels.
pub fn concat_forward<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (ca, ha, wa) = chw(a.shape())?;
    let (cb, hb, wb) = chw(b.shape())?;
    if (ha, wa) != (hb, wb) {
        return Err(NnError::ShapeMismatch(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new(vec![ca + cb, ha, wa], data)
}

pub fn concat_backward<T: Float>(
    a_shape: &[usize],
    b_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    let na: usize = a_shape.iter().product();
    let nb: usize = b_shape.iter().product();
    if na + nb != grad_out.len() {
        return Err(NnError::ShapeMismatch("concat gradient size mismatch".into()));
    }
    let g = grad_out.data();
    Ok((
        Tensor::new(a_shape.to_vec(), g[..na].to_vec())?,
        Tensor::new(b_shape.to_vec(), g[na..].to_vec())?,
    ))
}
