mod common;

use common::{map0, mean_of_map_model, normalized_relu, S};
use dyslab_core::interpret::{grad_cam, last_conv_layer, overlay, InterpretError};
use dyslab_core::models::{Arch, Model, SeverityConfig};
use dyslab_core::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[1, S, S], |_| rng.random_range(-1.0..1.0))
}

#[test]
fn mean_of_one_map_gives_that_map() {
    for relu in [false, true] {
        for seed in 1..=5 {
            let m = mean_of_map_model(relu, seed);
            let x = random_input(seed + 10);
            let cam = grad_cam(&m, &x, 0, None).unwrap();
            assert_eq!(cam.source_layer, "conv");
            assert_eq!(cam.heat.shape(), [S, S]);
            let want = normalized_relu(&map0(&m, &x));
            for (got, want) in cam.heat.data().iter().zip(&want) {
                assert!((*got as f64 - want).abs() < 1e-5, "relu={relu} seed={seed}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn all_negative_map_is_all_zero() {
    let mut m = mean_of_map_model(false, 1);
    m.weights.get_mut("conv.kernel").unwrap().data_mut().fill(0.0);
    m.weights.get_mut("conv.bias").unwrap().data_mut()[0] = -1.0;
    let cam = grad_cam(&m, &random_input(3), 0, None).unwrap();
    assert!(cam.heat.data().iter().all(|&v| v == 0.0));
    assert!(cam.band_mass(4).iter().all(|&v| v == 0.0));
}

#[test]
fn positive_logit_scaling_leaves_heat_unchanged() {
    let m = mean_of_map_model(false, 2);
    let x = random_input(4);
    let base = grad_cam(&m, &x, 1, None).unwrap();
    let mut scaled = m.clone();
    let hw = S * S;
    for v in &mut scaled.weights.get_mut("dense.kernel").unwrap().data_mut()[2 * hw..] {
        *v *= 3.5;
    }
    let other = grad_cam(&scaled, &x, 1, None).unwrap();
    for (a, b) in base.heat.data().iter().zip(other.heat.data()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn bad_layer_and_class() {
    let m = mean_of_map_model(true, 1);
    let x = random_input(1);
    assert!(matches!(grad_cam(&m, &x, 0, Some("flatten")), Err(InterpretError::NotAConvLayer(_))));
    assert!(matches!(grad_cam(&m, &x, 0, Some("nope")), Err(InterpretError::NotAConvLayer(_))));
    assert!(matches!(
        grad_cam(&m, &x, 2, None),
        Err(InterpretError::BadClass { class: 2, classes: 2 })
    ));
    assert!(grad_cam(&m, &Tensor::zeros(&[1, S + 1, S]), 0, None).is_err());
}

#[test]
fn severity_model_maps_are_bounded() {
    let m = Model::new(Arch::Severity(SeverityConfig { size: 32 }), 3).unwrap();
    assert_eq!(last_conv_layer(&m), Some("conv3"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(&[1, 32, 32], |_| rng.random_range(0.0..1.0));
    for class in 0..4 {
        for layer in [None, Some("conv1")] {
            let cam = grad_cam(&m, &x, class, layer).unwrap();
            assert_eq!(cam.heat.shape(), [32, 32]);
            assert!(cam.heat.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let rgb = overlay(&cam, &x).unwrap();
            assert_eq!(rgb.shape(), [3, 32, 32]);
            assert!(rgb.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
