//! Grad-CAM saliency over convolutional features and heatmap overlays.

use crate::dsp::{normalize_01, resize_bilinear};
use crate::models::Model;
use crate::nn::{LayerSpec, Mode, NnError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum InterpretError {
    #[error("{0:?} is not a convolutional layer")]
    NotAConvLayer(String),
    #[error("model has no convolutional layer")]
    NoConvLayer,
    #[error("class {class} out of range for {classes} outputs")]
    BadClass { class: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCamMap {
    /// `[H × W]` in `[0, 1]`, at the model's input resolution.
    pub heat: Tensor,
    pub target_class: usize,
    pub source_layer: String,
}

impl GradCamMap {
    /// Share of total heat in each of `n` equal row bands, row 0 first. All
    /// zeros when the map is empty.
    pub fn band_mass(&self, n: usize) -> Vec<f64> {
        let [h, w] = *self.heat.shape() else { unreachable!("heat is 2-D") };
        let total: f64 = self.heat.data().iter().map(|&v| v as f64).sum();
        (0..n)
            .map(|b| {
                let (r0, r1) = (b * h / n, (b + 1) * h / n);
                let s: f64 = self.heat.data()[r0 * w..r1 * w].iter().map(|&v| v as f64).sum();
                if total > 0.0 {
                    s / total
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Name of the deepest convolutional node.
pub fn last_conv_layer(model: &Model) -> Option<&str> {
    model
        .graph
        .nodes()
        .iter()
        .rev()
        .find(|n| matches!(n.layer, LayerSpec::Conv2d { .. }))
        .map(|n| n.name.as_str())
}

/// Grad-CAM for `target_class`.
///
/// The class score is the pre-activation output (the input of a final
/// softmax or sigmoid). Feature maps `A` are the conv layer's output, taken
/// after its ReLU when one directly follows. With `α_k` the spatial mean of
/// `∂score/∂A_k`, the map is `relu(Σ_k α_k·A_k)`, bilinearly resized to the
/// input size and min-max normalized (a map with no positive cell stays zero).
pub fn grad_cam(
    model: &Model,
    input: &Tensor,
    target_class: usize,
    layer: Option<&str>,
) -> Result<GradCamMap, InterpretError> {
    let g = &model.graph;
    let nodes = g.nodes();
    let name = match layer {
        Some(l) => l,
        None => last_conv_layer(model).ok_or(InterpretError::NoConvLayer)?,
    };
    let conv_idx = g
        .node_index(name)
        .filter(|&i| matches!(nodes[i].layer, LayerSpec::Conv2d { .. }))
        .ok_or_else(|| InterpretError::NotAConvLayer(name.to_string()))?;
    let feat_idx = nodes
        .iter()
        .position(|n| matches!(n.layer, LayerSpec::Relu) && n.inputs == [crate::nn::Source::Node(conv_idx)])
        .unwrap_or(conv_idx);

    let last = nodes.len() - 1;
    let score_idx = if matches!(nodes[last].layer, LayerSpec::Softmax | LayerSpec::Sigmoid) && last > 0 {
        last - 1
    } else {
        last
    };
    let classes = nodes[score_idx].output_shape.iter().product::<usize>();
    if target_class >= classes {
        return Err(InterpretError::BadClass {
            class: target_class,
            classes,
        });
    }

    let trace = g.forward(&model.weights, input, Mode::Eval)?;
    let mut seed = Tensor::zeros(&nodes[score_idx].output_shape);
    seed.data_mut()[target_class] = 1.0;
    let grads = g.backward(&model.weights, &trace, score_idx, seed, None, false)?;
    let a = &trace.outputs[feat_idx];
    let [c, h, w] = *a.shape() else {
        return Err(InterpretError::ShapeMismatch(format!("feature map shape {:?}", a.shape())));
    };
    let hw = h * w;
    let mut cam = vec![0.0f64; hw];
    if let Some(da) = &grads.nodes[feat_idx] {
        for k in 0..c {
            let alpha = da.data()[k * hw..(k + 1) * hw].iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
            if alpha == 0.0 {
                continue;
            }
            for (acc, &v) in cam.iter_mut().zip(&a.data()[k * hw..(k + 1) * hw]) {
                *acc += alpha * v as f64;
            }
        }
    }
    let cam = Tensor::new(vec![h, w], cam.into_iter().map(|v| v.max(0.0) as f32).collect())?;
    let in_shape = g.input_shape();
    let (ih, iw) = (in_shape[in_shape.len() - 2], in_shape[in_shape.len() - 1]);
    Ok(GradCamMap {
        heat: normalize_01(&resize_bilinear(&cam, ih, iw)),
        target_class,
        source_layer: name.to_string(),
    })
}

/// Heat color ramp, 256 RGB entries: blue `(0,0,255)` through green
/// `(0,254,1)` at entry 127 to yellow `(255,255,0)` at entry 255.
/// Entry `i < 128` is `(0, 2i, 255 − 2i)`; entry `i ≥ 128` is
/// `(2(i − 128) + 1, 255, 0)`.
pub const RAMP: [[u8; 3]; 256] = build_ramp();

const fn build_ramp() -> [[u8; 3]; 256] {
    let mut t = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = if i < 128 {
            [0, (2 * i) as u8, (255 - 2 * i) as u8]
        } else {
            [(2 * (i - 128) + 1) as u8, 255, 0]
        };
        i += 1;
    }
    t
}

pub const OVERLAY_ALPHA: f32 = 0.4;

/// `[3 × H × W]` RGB in `[0, 1]`: `(1 − 0.4)·base + 0.4·RAMP[round(255·heat)]`.
pub fn overlay(heat: &GradCamMap, base: &Tensor) -> Result<Tensor, InterpretError> {
    let [h, w] = *heat.heat.shape() else { unreachable!("heat is 2-D") };
    let base_hw = match *base.shape() {
        [bh, bw] | [1, bh, bw] => (bh, bw),
        ref s => return Err(InterpretError::ShapeMismatch(format!("base shape {s:?}"))),
    };
    if base_hw != (h, w) {
        return Err(InterpretError::ShapeMismatch(format!(
            "heat is {h}×{w}, base is {}×{}",
            base_hw.0, base_hw.1
        )));
    }
    let n = h * w;
    let mut out = vec![0.0f32; 3 * n];
    for (i, (&hv, &bv)) in heat.heat.data().iter().zip(base.data()).enumerate() {
        let color = RAMP[(hv.clamp(0.0, 1.0) * 255.0).round() as usize];
        let gray = bv.clamp(0.0, 1.0);
        for ch in 0..3 {
            let v = (1.0 - OVERLAY_ALPHA) * gray + OVERLAY_ALPHA * color[ch] as f32 / 255.0;
            out[ch * n + i] = v.clamp(0.0, 1.0);
        }
    }
    Ok(Tensor::new(vec![3, h, w], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(RAMP[0], [0, 0, 255]);
        assert_eq!(RAMP[127], [0, 254, 1]);
        assert_eq!(RAMP[128], [1, 255, 0]);
        assert_eq!(RAMP[255], [255, 255, 0]);
    }

    fn map(heat: Tensor) -> GradCamMap {
        GradCamMap {
            heat,
            target_class: 0,
            source_layer: "x".into(),
        }
    }

    #[test]
    fn zero_heat_is_gray_plus_blue() {
        let base = Tensor::from_fn(&[4, 4], |i| i as f32 / 15.0);
        let o = overlay(&map(Tensor::zeros(&[4, 4])), &base).unwrap();
        for i in 0..16 {
            let g = 0.6 * base.data()[i];
            assert!((o.data()[i] - g).abs() < 1e-6);
            assert!((o.data()[16 + i] - g).abs() < 1e-6);
            assert!((o.data()[32 + i] - (g + 0.4)).abs() < 1e-6);
        }
    }

    #[test]
    fn full_heat_on_black_is_yellow() {
        let o = overlay(&map(Tensor::full(&[3, 2], 1.0)), &Tensor::zeros(&[1, 3, 2])).unwrap();
        assert!(o.data()[..6].iter().all(|&v| (v - 0.4).abs() < 1e-6));
        assert!(o.data()[6..12].iter().all(|&v| (v - 0.4).abs() < 1e-6));
        assert!(o.data()[12..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overlay_shape_mismatch() {
        assert!(overlay(&map(Tensor::zeros(&[4, 4])), &Tensor::zeros(&[4, 5])).is_err());
    }

    #[test]
    fn band_mass_sums_to_one() {
        let m = map(Tensor::from_fn(&[8, 2], |i| (i / 2) as f32 / 7.0));
        let b = m.band_mass(4);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(b[3] > b[0]);
    }
}
