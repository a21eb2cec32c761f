use serde::{Deserialize, Serialize};

use super::{Array, ParameterStore};
use crate::{Error, Result};

/// Update rule plus optional global gradient-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        grad_clip: Option<f64>,
    },
    /// `v = alpha v + (1 - alpha) g^2; p -= lr g / sqrt(v + eps)`.
    #[serde(rename = "rmsprop")]
    RmsProp {
        lr: f64,
        alpha: f64,
        eps: f64,
        #[serde(default)]
        grad_clip: Option<f64>,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        eps: f64,
        #[serde(default)]
        grad_clip: Option<f64>,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

impl OptimizerConfig {
    /// RMSProp settings used for the value-based learners.
    pub fn value_rmsprop() -> Self {
        OptimizerConfig::RmsProp {
            lr: 5e-4,
            alpha: 0.99,
            eps: 1e-5,
            grad_clip: Some(10.0),
        }
    }

    /// Adam settings used for PPO.
    pub fn ppo_adam() -> Self {
        OptimizerConfig::Adam {
            lr: 7e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            grad_clip: Some(0.5),
        }
    }

    /// RMSProp settings used for A2C.
    pub fn a2c_rmsprop() -> Self {
        OptimizerConfig::RmsProp {
            lr: 7e-4,
            alpha: 0.99,
            eps: 1e-5,
            grad_clip: Some(0.5),
        }
    }

    pub fn grad_clip(&self) -> Option<f64> {
        match *self {
            OptimizerConfig::Sgd { grad_clip, .. }
            | OptimizerConfig::RmsProp { grad_clip, .. }
            | OptimizerConfig::Adam { grad_clip, .. } => grad_clip,
        }
    }
}

pub fn global_grad_norm(store: &ParameterStore) -> f64 {
    libm::sqrt(store.iter().map(|(_, p)| p.grad.sum_squares()).sum::<f64>())
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = global_grad_norm(store);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.scale_in_place(s);
        }
    }
    norm
}

/// Applies one update from the stored gradients, then clears them.
/// Returns the gradient norm before clipping.
pub fn optimizer_step(store: &mut ParameterStore, config: &OptimizerConfig) -> Result<f64> {
    if let Some((_, bad)) = store.iter().find(|(_, p)| !p.grad.all_finite()) {
        return Err(Error::NonFiniteGradient(bad.name.clone()));
    }
    let norm = match config.grad_clip() {
        Some(max) => clip_grad_norm(store, max),
        None => global_grad_norm(store),
    };
    store.step += 1;
    let t = store.step as i32;
    for p in store.iter_mut() {
        match *config {
            OptimizerConfig::Sgd { lr, .. } => {
                for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                    *w -= lr * g;
                }
            }
            OptimizerConfig::RmsProp { lr, alpha, eps, .. } => {
                if p.state.is_empty() {
                    p.state.push(Array::zeros(p.value.shape()));
                }
                let v = p.state[0].data_mut();
                for ((w, g), v) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(v.iter_mut()) {
                    *v = alpha * *v + (1.0 - alpha) * g * g;
                    *w -= lr * g / libm::sqrt(*v + eps);
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                ..
            } => {
                if p.state.is_empty() {
                    p.state.push(Array::zeros(p.value.shape()));
                    p.state.push(Array::zeros(p.value.shape()));
                }
                let c1 = 1.0 - libm::pow(beta1, t as f64);
                let c2 = 1.0 - libm::pow(beta2, t as f64);
                let (m, rest) = p.state.split_at_mut(1);
                let m = m[0].data_mut();
                let v = rest[0].data_mut();
                for (i, (w, g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    *w -= lr * mh / (libm::sqrt(vh) + eps);
                }
            }
        }
        p.grad.fill(0.0);
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(w: f64, g: f64) -> ParameterStore {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Array::scalar(w)).unwrap();
        s.get_mut(id).grad = Array::scalar(g);
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = store_with(1.0, 2.0);
        optimizer_step(&mut s, &OptimizerConfig::Sgd { lr: 0.1, grad_clip: None }).unwrap();
        assert!((s.iter().next().unwrap().1.value.item() - 0.8).abs() < 1e-15);
        assert_eq!(s.iter().next().unwrap().1.grad.item(), 0.0);
    }

    #[test]
    fn clip_halves_norm_twenty() {
        let mut s = ParameterStore::new();
        let a = s.insert("a", Array::row(alloc::vec![0.0, 0.0])).unwrap();
        // (12, 16) has norm 20
        s.get_mut(a).grad = Array::row(alloc::vec![12.0, 16.0]);
        let norm = clip_grad_norm(&mut s, 10.0);
        assert_eq!(norm, 20.0);
        assert_eq!(s.grad(a).data(), &[6.0, 8.0]);
    }

    #[test]
    fn rmsprop_first_step_matches_scalar_recurrence() {
        let (lr, g) = (5e-4, 0.37);
        let mut s = store_with(0.0, g);
        let cfg = OptimizerConfig::RmsProp {
            lr,
            alpha: 0.99,
            eps: 1e-5,
            grad_clip: None,
        };
        optimizer_step(&mut s, &cfg).unwrap();
        let expected = -lr * g / libm::sqrt(0.01 * g * g + 1e-5);
        let got = s.iter().next().unwrap().1.value.item();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with(0.0, f64::NAN);
        let err = optimizer_step(&mut s, &OptimizerConfig::Sgd { lr: 0.1, grad_clip: None }).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("w".into()));
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut s = store_with(1.0, -3.0);
        let cfg = OptimizerConfig::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 0.0,
            grad_clip: None,
        };
        optimizer_step(&mut s, &cfg).unwrap();
        let w = s.iter().next().unwrap().1.value.item();
        assert!((w - 1.001).abs() < 1e-12);
    }
}
