use super::weights::WeightStore;
use super::NnError;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Number of steps taken.
    pub t: u64,
    m: Option<WeightStore<f32>>,
    v: Option<WeightStore<f32>>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: None,
            v: None,
        }
    }

    pub fn first_moment(&self) -> Option<&WeightStore<f32>> {
        self.m.as_ref()
    }

    pub fn second_moment(&self) -> Option<&WeightStore<f32>> {
        self.v.as_ref()
    }

    pub fn step(&mut self, params: &mut WeightStore<f32>, grads: &WeightStore<f32>) -> Result<(), NnError> {
        if !params.same_layout(grads) {
            return Err(NnError::ShapeMismatch(
                "gradient store does not match parameter store".into(),
            ));
        }
        let m = self.m.get_or_insert_with(|| params.zeros_like());
        let v = self.v.get_or_insert_with(|| params.zeros_like());
        if !params.same_layout(m) {
            return Err(NnError::ShapeMismatch(
                "optimizer state belongs to a different parameter store".into(),
            ));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - b2.powi(self.t.min(i32::MAX as u64) as i32);
        for (((_, p), (_, g)), ((_, mt), (_, vt))) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(mt.data_mut())
                .zip(vt.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store(vals: &[f32]) -> WeightStore<f32> {
        let mut s = WeightStore::new();
        s.insert("w", Tensor::new(vec![vals.len()], vals.to_vec()).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store(&[1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut adam = Adam::new(1e-3);
        adam.step(&mut p, &before.zeros_like()).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(&[0.0, 5.0]);
        let g = store(&[1.0, 1.0]);
        let mut adam = Adam::new(1e-3);
        adam.step(&mut p, &g).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + ε)
        let d = p.get("w").unwrap().data();
        assert!((d[0] + 1e-3).abs() < 1e-8);
        assert!((d[1] - (5.0 - 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn identical_state_gives_identical_step() {
        let p0 = store(&[0.1, 0.2, 0.3]);
        let g = store(&[0.5, -0.25, 2.0]);
        let mut a = Adam::new(1e-2);
        let mut pa = p0.clone();
        a.step(&mut pa, &g).unwrap();
        let mut b = a.clone();
        let mut pb = pa.clone();
        a.step(&mut pa, &g).unwrap();
        b.step(&mut pb, &g).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a.first_moment(), b.first_moment());
    }

    #[test]
    fn mismatched_grads_rejected() {
        let mut p = store(&[0.0, 1.0]);
        let g = store(&[1.0]);
        assert!(Adam::new(1e-3).step(&mut p, &g).is_err());
    }
}
