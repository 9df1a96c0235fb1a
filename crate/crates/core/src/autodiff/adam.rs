use serde::{Deserialize, Serialize};

use super::{Gradients, Module, Parameter, Real, Tensor};
use crate::{Error, Result};

/// Adam hyper-parameters; the learning rate is supplied per step by the
/// schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_eps() -> f64 {
    1e-8
}

impl Adam {
    /// GAN-phase generator settings.
    pub const GENERATOR: Adam = Adam {
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 1e-4,
    };
    pub const DISCRIMINATOR: Adam = Adam {
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.0,
    };
    pub const GUIDANCE: Adam = Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.0,
    };

    /// Updates one parameter. A missing gradient counts as zero.
    pub fn step_param<T: Real>(&self, p: &mut Parameter<T>, grad: Option<&Tensor<T>>, lr: f64) -> Result<()> {
        if let Some(g) = grad {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(p.name().to_string()));
            }
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", format!("{}: grad {:?}", p.name(), g.shape())));
            }
        }
        let step = p.adam.step + 1;
        let bc1 = 1.0 - self.beta1.powi(step as i32);
        let bc2 = 1.0 - self.beta2.powi(step as i32);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (wd, eps) = (T::of(self.weight_decay), T::of(self.eps));
        let (lr_t, bc1, bc2) = (T::of(lr), T::of(bc1), T::of(bc2));
        let mut state = std::mem::take(&mut p.adam);
        let value = p.value_mut().data_mut();
        for i in 0..value.len() {
            let g = grad.map_or(T::zero(), |g| g.data()[i]) + wd * value[i];
            state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
            state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            value[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        state.step = step;
        p.adam = state;
        Ok(())
    }

    /// Updates every parameter of `module`. Gradients are validated first so
    /// a non-finite gradient leaves the module untouched.
    pub fn step<T: Real>(&self, module: &mut dyn Module<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        let mut bad = None;
        module.visit_params(&mut |p| {
            if bad.is_none() && grads.of_param(p).is_some_and(|g| !g.all_finite()) {
                bad = Some(p.name().to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFiniteGradient(name));
        }
        let mut result = Ok(());
        module.visit_params_mut(&mut |p| {
            if result.is_ok() {
                result = self.step_param(p, grads.of_param(p), lr);
            }
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;

    fn plain(beta1: f64) -> Adam {
        Adam {
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Parameter::new("x", Tensor::<f64>::scalar(0.7));
        plain(0.9).step_param(&mut p, Some(&Tensor::scalar(1.0)), 0.1).unwrap();
        assert!((p.value().item() - 0.6).abs() < 1e-6);
        assert_eq!(p.adam_state().step, 1);
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = Parameter::new("x", Tensor::<f64>::full([3], 0.5));
        plain(0.5).step_param(&mut p, Some(&Tensor::zeros([3])), 0.1).unwrap();
        assert_eq!(p.value().data(), &[0.5; 3]);
    }

    #[test]
    fn minimizes_square() {
        let mut p = Parameter::new("x", Tensor::<f64>::scalar(1.0));
        let adam = plain(0.9);
        for _ in 0..100 {
            let tape = Tape::new();
            let x = tape.param(&p);
            let g = x.square().sum().backward().unwrap();
            let grad = g.of_param(&p).unwrap().clone();
            adam.step_param(&mut p, Some(&grad), 0.05).unwrap();
        }
        assert!(p.value().item().abs() < 0.05, "{}", p.value().item());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Parameter::new("enc.conv1.weight", Tensor::<f64>::scalar(1.0));
        let err = plain(0.5)
            .step_param(&mut p, Some(&Tensor::scalar(f64::NAN)), 0.1)
            .unwrap_err();
        assert!(err.to_string().contains("enc.conv1.weight"));
        assert_eq!(p.value().item(), 1.0);
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let mut p = Parameter::new("x", Tensor::<f64>::scalar(2.0));
        Adam::GENERATOR.step_param(&mut p, None, 0.01).unwrap();
        assert!(p.value().item() < 2.0);
    }
}
