use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// SGD with momentum and L2 weight decay:
/// `v ← m·v + g + λ·θ`, `θ ← θ − lr·v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd<T> {
    pub velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Sgd {
            velocity: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Every parameter must have received a gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
        if self.velocity.len() != store.len() {
            return Err(Error::usage("optimizer state does not match the parameter set"));
        }
        if let Some(p) = store.iter().find(|p| !p.has_grad) {
            return Err(Error::usage(format!("no gradient for parameter {}", p.name)));
        }
        let (lr, m, wd) = (T::from_f64_lossy(lr), T::from_f64_lossy(momentum), T::from_f64_lossy(weight_decay));
        for (p, v) in store.iter_mut().zip(&mut self.velocity) {
            for ((vi, &g), theta) in v.data_mut().iter_mut().zip(p.grad.data()).zip(p.value.data_mut()) {
                *vi = m * *vi + g + wd * *theta;
                *theta = *theta - lr * *vi;
            }
        }
        store.zero_grads();
        Ok(())
    }
}

/// Scales every gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm {
        let scale = T::from_f64_lossy(max_norm / norm);
        for p in store.iter_mut() {
            for g in p.grad.data_mut() {
                *g = *g * scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn store_with(value: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::full(Shape::new(1, 1, 1, 2), value)).unwrap();
        let p = s.get_mut(id);
        p.grad.fill(grad);
        p.has_grad = true;
        s
    }

    fn regrad(s: &mut ParamStore<f64>, g: f64) {
        for p in s.iter_mut() {
            p.grad.fill(g);
            p.has_grad = true;
        }
    }

    #[test]
    fn vanilla_step_is_closed_form() {
        let mut s = store_with(1.0, 0.5);
        let mut opt = Sgd::new(&s);
        opt.step(&mut s, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(s.by_name("p").unwrap().value.data(), &[0.95, 0.95]);
        assert!(s.iter().all(|p| !p.has_grad && p.grad.data().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = store_with(1.25, 0.0);
        let mut opt = Sgd::new(&s);
        opt.step(&mut s, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(s.by_name("p").unwrap().value.data(), &[1.25, 1.25]);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut s = store_with(0.7, 3.0);
        let mut opt = Sgd::new(&s);
        opt.step(&mut s, 0.0, 0.9, 1e-4).unwrap();
        assert_eq!(s.by_name("p").unwrap().value.data(), &[0.7, 0.7]);
    }

    #[test]
    fn two_momentum_steps_displace_by_lr_g_two_plus_m() {
        let (lr, g, m) = (0.1, 0.5, 0.9);
        let mut s = store_with(0.0, g);
        let mut opt = Sgd::new(&s);
        opt.step(&mut s, lr, m, 0.0).unwrap();
        regrad(&mut s, g);
        opt.step(&mut s, lr, m, 0.0).unwrap();
        let moved = -s.by_name("p").unwrap().value.data()[0];
        assert!((moved - lr * g * (2.0 + m)).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_usage_error() {
        let mut s = store_with(1.0, 0.0);
        s.zero_grads();
        let mut opt = Sgd::new(&s);
        assert!(matches!(opt.step(&mut s, 0.1, 0.0, 0.0), Err(Error::Usage(_))));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut s = store_with(0.0, 3.0);
        let before = clip_grad_norm(&mut s, 1.0);
        assert!((before - 18f64.sqrt()).abs() < 1e-12);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
        let again = clip_grad_norm(&mut s, 5.0);
        assert!((again - 1.0).abs() < 1e-12);
    }
}
