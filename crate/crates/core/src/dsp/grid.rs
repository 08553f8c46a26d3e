//! Element-wise scaling and resampling of 2-D grids.

use crate::nn::Tensor;

/// Floor applied before taking logarithms.
pub const AMIN: f32 = 1e-10;

fn dims(grid: &Tensor) -> (usize, usize) {
    match *grid.shape() {
        [h, w] => (h, w),
        [1, h, w] => (h, w),
        ref s => panic!("expected a 2-D grid, got {s:?}"),
    }
}

/// `10·log10(max(v, AMIN)) − 10·log10(max(ref, AMIN))` clamped below at
/// `−top_db`, where `ref` is the grid maximum.
pub fn power_to_db(grid: &Tensor, top_db: f32) -> Tensor {
    let max = grid.data().iter().copied().fold(0.0f32, f32::max);
    let reference = 10.0 * max.max(AMIN).log10();
    grid.map(|v| (10.0 * v.max(AMIN).log10() - reference).max(-top_db))
}

/// Inverse of [`power_to_db`] up to the reference: `reference · 10^(db/10)`.
pub fn db_to_power(grid: &Tensor, reference: f32) -> Tensor {
    grid.map(|db| reference * 10f32.powf(db / 10.0))
}

/// `(v − min)/(max − min)`; a constant grid maps to all zeros.
pub fn normalize_01(grid: &Tensor) -> Tensor {
    let (lo, hi) = grid
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return grid.map(|_| 0.0);
    }
    grid.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
}

/// Bilinear resize with a corner-aligned sampling grid: output row `i` reads
/// input row `i·(H−1)/(H'−1)`. Works on `[H, W]` or `[1, H, W]` grids and
/// keeps the input's rank.
pub fn resize_bilinear(grid: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w) = dims(grid);
    assert!(out_h > 0 && out_w > 0, "target size must be positive");
    let shape = if grid.shape().len() == 3 {
        vec![1, out_h, out_w]
    } else {
        vec![out_h, out_w]
    };
    if (h, w) == (out_h, out_w) {
        return grid.clone();
    }
    let src = grid.data();
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f32) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (pos.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, (pos - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..out_w).map(|j| coord(j, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (r0, r1, fy) = coord(i, h, out_h);
        for &(c0, c1, fx) in &cols {
            let top = src[r0 * w + c0] * (1.0 - fx) + src[r0 * w + c1] * fx;
            let bottom = src[r1 * w + c0] * (1.0 - fx) + src[r1 * w + c1] * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            // interpolation weights sum to 1, but rounding can step past the corners
            let (lo, hi) = [src[r0 * w + c0], src[r0 * w + c1], src[r1 * w + c0], src[r1 * w + c1]]
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            out.push(v.clamp(lo, hi));
        }
    }
    Tensor::new(shape, out).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(h: usize, w: usize, data: &[f32]) -> Tensor {
        Tensor::new(vec![h, w], data.to_vec()).unwrap()
    }

    #[test]
    fn db_reference_points() {
        let g = grid(1, 3, &[10.0, 1.0, 0.0]);
        let db = power_to_db(&g, 80.0);
        assert_eq!(db.data()[0], 0.0);
        assert!((db.data()[1] + 10.0).abs() < 1e-5);
        assert_eq!(db.data()[2], -80.0);
    }

    #[test]
    fn db_inverse_recovers_power() {
        let g = grid(1, 3, &[4.0, 0.4, 0.04]);
        let back = db_to_power(&power_to_db(&g, 80.0), 4.0);
        for (a, b) in back.data().iter().zip(g.data()) {
            assert!((a - b).abs() / b < 1e-5);
        }
    }

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize_01(&grid(1, 2, &[-80.0, 0.0])).data(), &[0.0, 1.0]);
        assert!(normalize_01(&grid(2, 2, &[3.0; 4])).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resize_hand_example() {
        let g = grid(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let r = resize_bilinear(&g, 2, 4);
        let third = 1.0f32 / 3.0;
        let expect = [0.0, third, 2.0 * third, 1.0];
        for row in r.data().chunks(4) {
            for (a, b) in row.iter().zip(expect) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let g = Tensor::from_fn(&[128, 128], |i| (i as f32 * 0.731).sin());
        assert_eq!(resize_bilinear(&g, 128, 128), g);
        let c = Tensor::full(&[5, 7], 0.42f32);
        let r = resize_bilinear(&c, 13, 3);
        assert!(r.data().iter().all(|&v| v == 0.42));
        let one = resize_bilinear(&grid(1, 1, &[2.0]), 3, 3);
        assert!(one.data().iter().all(|&v| v == 2.0));
    }

    proptest! {
        #[test]
        fn db_is_monotone(mut vals in proptest::collection::vec(0.0f32..1e6, 2..50)) {
            vals.sort_by(f32::total_cmp);
            let n = vals.len();
            let db = power_to_db(&Tensor::new(vec![1, n], vals).unwrap(), 80.0);
            for w in db.data().windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn resize_stays_within_bounds(
            h in 1usize..8, w in 1usize..8, oh in 1usize..20, ow in 1usize..20, seed in any::<u64>()
        ) {
            let mut s = seed;
            let g = Tensor::from_fn(&[h, w], |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f32 / (1u64 << 24) as f32 * 200.0 - 100.0
            });
            let (lo, hi) = g.data().iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let r = resize_bilinear(&g, oh, ow);
            prop_assert_eq!(r.shape(), &[oh, ow]);
            prop_assert!(r.data().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn normalize_hits_both_ends(vals in proptest::collection::vec(-1e3f32..1e3, 2..40)) {
            let n = vals.len();
            prop_assume!(vals.iter().any(|&v| v != vals[0]));
            let r = normalize_01(&Tensor::new(vec![1, n], vals).unwrap());
            let lo = r.data().iter().copied().fold(f32::INFINITY, f32::min);
            let hi = r.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 1.0);
        }
    }
}
