use serde::{Deserialize, Serialize};

use super::{AutodiffError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
) -> Result<(), AutodiffError> {
    for (what, len) in [
        ("gradient", grads.len()),
        ("first moment", state.m.len()),
        ("second moment", state.v.len()),
    ] {
        if len != params.len() {
            return Err(AutodiffError::LengthMismatch {
                what,
                expected: params.len(),
                actual: len,
            });
        }
    }
    state.t += 1;
    let h = state.hyper;
    let t = state.t as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    let (b1, b2) = (T::of(h.beta1), T::of(h.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - h.beta1), T::of(1.0 - h.beta2));
    // lr * m̂ / (sqrt(v̂) + eps) with the corrections folded into two scalars
    let step = T::of(h.learning_rate / c1);
    let inv_c2 = T::of(1.0 / c2);
    let eps = T::of(h.epsilon);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut p = vec![0.5f32, -1.25, 3.0];
        let before = p.clone();
        let mut s = AdamState::new(3, AdamHyper::default());
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let hyper = AdamHyper {
            learning_rate: 0.1,
            ..AdamHyper::default()
        };
        for g in [3.0f64, -0.02, 250.0] {
            let mut p = [1.0f64];
            let mut s = AdamState::new(1, hyper);
            adam_step(&mut p, &[g], &mut s).unwrap();
            assert!((p[0] - (1.0 - 0.1 * g.signum())).abs() < 1e-6, "g={g}");
        }
    }

    #[test]
    fn three_steps_match_reference_recurrences() {
        let hyper = AdamHyper {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut p = vec![0.3f64, -0.7, 1.1, 0.0];
        let grads = [
            [0.5, -0.1, 0.2, 1.0],
            [-0.3, 0.4, 0.0, 0.9],
            [0.1, 0.1, -0.8, -2.0],
        ];
        // textbook form, step by step
        let mut want = p.clone();
        let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            for i in 0..4 {
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                let mhat = m[i] / (1.0 - 0.9f64.powi(t));
                let vhat = v[i] / (1.0 - 0.999f64.powi(t));
                want[i] -= 0.01 * mhat / (vhat.sqrt() + 1e-8);
            }
        }
        let mut s = AdamState::new(4, hyper);
        for g in &grads {
            adam_step(&mut p, g, &mut s).unwrap();
        }
        assert_eq!(s.t, 3);
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut p = vec![0.0f32; 3];
        let mut s = AdamState::new(3, AdamHyper::default());
        let err = adam_step(&mut p, &[1.0, 2.0], &mut s).unwrap_err();
        assert!(matches!(err, AutodiffError::LengthMismatch { .. }));
        assert_eq!(s.t, 0);
    }
}
