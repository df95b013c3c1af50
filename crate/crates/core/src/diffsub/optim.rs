use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::DiffError;

/// AdamW hyper-parameters. Defaults are the production training recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-3,
            eps: 1e-8,
        }
    }
}

/// One AdamW update with decoupled weight decay.
///
/// `grads` is aligned with the store order. `step_index` is 1-based and drives the bias
/// correction. Every gradient is checked before any parameter is touched, so a non-finite
/// gradient leaves the store unchanged.
pub fn adamw_step(
    store: &mut ParamStore,
    grads: &[Tensor],
    cfg: &AdamWConfig,
    step_index: u64,
) -> Result<(), DiffError> {
    if step_index == 0 {
        return Err(DiffError::InvalidConfig("step_index must be >= 1".into()));
    }
    if grads.len() != store.len() {
        return Err(DiffError::InvalidConfig(format!(
            "{} gradients for {} parameters",
            grads.len(),
            store.len()
        )));
    }
    for (p, g) in store.iter().zip(grads) {
        if g.shape() != p.shape.as_slice() {
            return Err(DiffError::ShapeMismatch {
                op: "adamw_step",
                lhs: p.shape.clone(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(DiffError::NonFiniteGradient(p.name.clone()));
        }
    }

    let t = step_index as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (p, g) in store.params_mut().iter_mut().zip(grads) {
        for i in 0..p.value.len() {
            let gi = g.data()[i];
            let m = cfg.beta1 * f64::from(p.first_moment[i]) + (1.0 - cfg.beta1) * gi;
            let v = cfg.beta2 * f64::from(p.second_moment[i]) + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let w = f64::from(p.value[i]) * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            p.first_moment[i] = m as f32;
            p.second_moment[i] = v as f32;
            p.value[i] = w as f32;
        }
    }
    store.step = step_index;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f32]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", &[values.len()], values.to_vec()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut s = store_with(&[0.5, -1.25, 3.0]);
        let before = s.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut s, &[Tensor::zeros(&[3])], &cfg, 1).unwrap();
        assert_eq!(
            s.get(super::super::ParamId(0)).value,
            before.get(super::super::ParamId(0)).value
        );
    }

    #[test]
    fn decoupled_decay_one_step() {
        let vals = [0.5f32, -1.25, 3.0];
        let mut s = store_with(&vals);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 1e-3,
            ..Default::default()
        };
        adamw_step(&mut s, &[Tensor::zeros(&[3])], &cfg, 1).unwrap();
        for (got, v) in s.get(super::super::ParamId(0)).value.iter().zip(vals) {
            let want = (f64::from(v) * (1.0 - 0.1 * 1e-3)) as f32;
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn constant_gradient_step_is_bounded_by_lr() {
        let mut s = store_with(&[0.0, 0.0]);
        let cfg = AdamWConfig {
            lr: 1e-2,
            weight_decay: 0.0,
            ..Default::default()
        };
        let g = Tensor::new(vec![2], vec![0.3, -7.0]).unwrap();
        let mut prev = s.get(super::super::ParamId(0)).value.clone();
        for step in 1..=200 {
            adamw_step(&mut s, &[g.clone()], &cfg, step).unwrap();
            let cur = s.get(super::super::ParamId(0)).value.clone();
            for (a, b) in cur.iter().zip(&prev) {
                let delta = f64::from(a - b).abs();
                // bias-corrected moments equal g and g^2 exactly, so |step| = lr*|g|/(|g|+eps)
                assert!(delta <= cfg.lr * (1.0 + 1e-4), "step {step}: {delta}");
                assert!(delta >= cfg.lr * (1.0 - 1e-3), "step {step}: {delta}");
            }
            prev = cur;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with(&[1.0]);
        let before = s.clone();
        let err = adamw_step(
            &mut s,
            &[Tensor::full(&[1], f64::NAN)],
            &AdamWConfig::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, DiffError::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(s, before);
    }

    #[test]
    fn deterministic() {
        let g = Tensor::new(vec![3], vec![0.1, -0.2, 0.3]).unwrap();
        let run = || {
            let mut s = store_with(&[1.0, 2.0, 3.0]);
            for step in 1..=10 {
                adamw_step(&mut s, &[g.clone()], &AdamWConfig::default(), step).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }
}
