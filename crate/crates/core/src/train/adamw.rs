use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 3e-4,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter plus the shared step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps >= 0.0
            && [self.lr, self.weight_decay, self.eps].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }

    /// One update of every parameter that has a gradient. Gradients are
    /// checked for shape and finiteness before anything is modified.
    pub fn step(
        &self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
        state: &mut OptimState,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Validation(format!("gradient for unknown parameter `{name}`")))?;
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adamw_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if let Some(i) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("`{name}` entry {i} is {}", g.data()[i])));
            }
        }

        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros_like(p));
            let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros_like(p));
            let n = p.numel();
            let (mut pd, mut md, mut vd) = (p.data().to_vec(), m.data().to_vec(), v.data().to_vec());
            for i in 0..n {
                let gi = g.data()[i];
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * pd[i]);
            }
            let shape = p.shape().to_vec();
            *p = Tensor::from_parts(shape.clone(), pd);
            *m = Tensor::from_parts(shape.clone(), md);
            *v = Tensor::from_parts(shape, vd);
            p.ensure_finite("adamw_step")?;
        }
        Ok(())
    }
}

/// [`AdamW::step`] on a model's parameters.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut OptimState,
    opt: &AdamW,
) -> Result<()> {
    opt.step(params.tensors_mut(), grads, state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([(name.to_string(), Tensor::scalar(v))])
    }

    fn value(p: &BTreeMap<String, Tensor>) -> f64 {
        p["w"].data()[0]
    }

    #[test]
    fn first_step_by_hand() {
        let opt = AdamW {
            lr: 0.1,
            weight_decay: 0.0,
            eps: 0.0,
            ..AdamW::default()
        };
        let mut p = one("w", 0.0);
        let mut s = OptimState::default();
        opt.step(&mut p, &one("w", 1.0), &mut s).unwrap();
        assert!((value(&p) + 0.1).abs() < 1e-15);
        assert_eq!(s.step, 1);
        assert!((s.m["w"].data()[0] - 0.1).abs() < 1e-15);
        assert!((s.v["w"].data()[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        let mut p = one("w", 0.75);
        let mut s = OptimState::default();
        for _ in 0..5 {
            opt.step(&mut p, &one("w", 0.0), &mut s).unwrap();
        }
        assert_eq!(value(&p), 0.75);
    }

    #[test]
    fn decay_only_step_is_decoupled() {
        let opt = AdamW {
            lr: 0.01,
            weight_decay: 0.5,
            ..AdamW::default()
        };
        let theta = 2.0;
        let mut p = one("w", theta);
        let mut s = OptimState::default();
        opt.step(&mut p, &one("w", 0.0), &mut s).unwrap();
        assert_eq!(value(&p), theta - opt.lr * opt.weight_decay * theta);
    }

    #[test]
    fn non_finite_gradient_fails_before_updating() {
        let mut p = BTreeMap::from([
            ("a".to_string(), Tensor::scalar(1.0)),
            ("w".to_string(), Tensor::scalar(1.0)),
        ]);
        let grads = BTreeMap::from([
            ("a".to_string(), Tensor::scalar(1.0)),
            ("w".to_string(), Tensor::from_parts(vec![], vec![f64::NAN])),
        ]);
        let mut s = OptimState::default();
        let err = AdamW::default().step(&mut p, &grads, &mut s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(_)));
        assert_eq!(p["a"].data()[0], 1.0);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn quadratic_converges() {
        let opt = AdamW {
            lr: 1e-2,
            weight_decay: 0.0,
            ..AdamW::default()
        };
        let mut p = one("w", 1.0);
        let mut s = OptimState::default();
        let mut steps = 0;
        while value(&p).abs() >= 1e-3 {
            assert!(steps < 2000, "no convergence, theta = {}", value(&p));
            let g = 2.0 * value(&p);
            opt.step(&mut p, &one("w", g), &mut s).unwrap();
            steps += 1;
        }
        assert!(s.v["w"].data()[0] >= 0.0);
    }
}
