//! RMSprop over the trainable entries of a [`ModelParams`].

use crate::error::{Error, Result};
use crate::nn::{ModelParams, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub alpha: f64,
    pub eps: f64,
    /// Running mean of squared gradients, one slot per parameter entry.
    square_avg: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(alpha: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || !(eps >= 0.0) {
            return Err(Error::invalid(format!("rmsprop needs 0 <= alpha < 1 and eps >= 0, got {alpha}, {eps}")));
        }
        Ok(Self {
            alpha,
            eps,
            square_avg: Vec::new(),
        })
    }

    /// `v = alpha v + (1 - alpha) g^2`, `theta -= lr g / (sqrt(v) + eps)`.
    ///
    /// Consumes the gradients: a second call without a new backward pass is a usage error.
    pub fn step<T: Real>(&mut self, p: &mut ModelParams<T>, lr: f64) -> Result<()> {
        if !p.grads_ready() {
            return Err(Error::Usage("optimizer step without gradients from a backward pass".into()));
        }
        if self.square_avg.is_empty() {
            self.square_avg = p.entries().iter().map(|e| vec![0.0; e.value.len()]).collect();
        } else if self.square_avg.len() != p.len() {
            return Err(Error::Usage("optimizer state belongs to a different model".into()));
        }
        for (e, v) in p.entries_mut().iter_mut().zip(&mut self.square_avg) {
            if !e.trainable {
                continue;
            }
            for ((theta, g), v) in e.value.iter_mut().zip(&e.grad).zip(v.iter_mut()) {
                let g = g.to_f64_lossy();
                *v = self.alpha * *v + (1.0 - self.alpha) * g * g;
                let denom = v.sqrt() + self.eps;
                if denom > 0.0 {
                    *theta = T::from_f64_lossy(theta.to_f64_lossy() - lr * g / denom);
                }
            }
        }
        p.clear_grads_ready();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(theta: f64, g: f64) -> ModelParams<f64> {
        let mut p = ModelParams::new();
        let id = p.add("theta", &[1], vec![theta], true).unwrap();
        p.grad_mut(id)[0] = g;
        p.mark_grads_ready();
        p
    }

    #[test]
    fn one_hand_computed_update() {
        let mut p = scalar(1.0, 1.0);
        let mut opt = RmsProp::new(0.9, 0.0).unwrap();
        opt.step(&mut p, 0.1).unwrap();
        let expected = 1.0 - 0.1 / 0.1f64.sqrt();
        assert!((p.entries()[0].value[0] - expected).abs() < 1e-12);
        assert!((expected - 0.6838).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.3, 0.0);
        RmsProp::new(0.99, 1e-8).unwrap().step(&mut p, 0.5).unwrap();
        assert_eq!(p.entries()[0].value[0], 0.3);
    }

    #[test]
    fn missing_gradients_are_a_usage_error() {
        let mut p = scalar(0.3, 1.0);
        let mut opt = RmsProp::new(0.99, 1e-8).unwrap();
        opt.step(&mut p, 0.1).unwrap();
        assert!(matches!(opt.step(&mut p, 0.1), Err(Error::Usage(_))));
        let mut fresh = ModelParams::<f64>::new();
        fresh.add("w", &[2], vec![1.0, 2.0], true).unwrap();
        assert!(matches!(opt.step(&mut fresh, 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut p = ModelParams::<f64>::new();
        let id = p.add("running_mean", &[1], vec![2.0], false).unwrap();
        p.grad_mut(id)[0] = 1.0;
        p.mark_grads_ready();
        RmsProp::new(0.99, 1e-8).unwrap().step(&mut p, 1.0).unwrap();
        assert_eq!(p.value(id)[0], 2.0);
    }
}
