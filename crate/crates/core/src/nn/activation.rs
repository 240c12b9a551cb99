use crate::error::{Error, Result};
use crate::nn::params::ParamBuilder;
use crate::nn::{sigmoid, FeatureTensor, ModelParams, ParamId, Real};

/// Parametric ReLU with one learnable slope per channel.
#[derive(Debug, Clone)]
pub struct Prelu {
    pub channels: usize,
    pub slope: ParamId,
}

impl Prelu {
    pub fn new<T: Real>(channels: usize, b: &mut ParamBuilder<T>) -> Result<Self> {
        let slope = b.constant("slope", &[channels], 0.25)?;
        Ok(Self { channels, slope })
    }

    fn check<T: Real>(&self, x: &FeatureTensor<T>) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::shape(
                "prelu",
                format!("expected {} channels, got {}", self.channels, x.channels()),
            ));
        }
        Ok(())
    }

    /// In-place on one `channels x freq` frame.
    pub fn apply_frame<T: Real>(&self, p: &ModelParams<T>, frame: &mut [T], freq: usize) {
        for (row, &a) in frame.chunks_exact_mut(freq).zip(p.value(self.slope)) {
            for v in row {
                if *v <= T::zero() {
                    *v *= a;
                }
            }
        }
    }

    pub fn forward<T: Real>(&self, p: &ModelParams<T>, x: &FeatureTensor<T>) -> Result<FeatureTensor<T>> {
        self.check(x)?;
        let mut y = x.clone();
        let freq = x.freq();
        for b in 0..x.batch() {
            for t in 0..x.time() {
                self.apply_frame(p, y.frame_mut(b, t), freq);
            }
        }
        Ok(y)
    }

    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &FeatureTensor<T>,
        grad_out: &FeatureTensor<T>,
    ) -> Result<FeatureTensor<T>> {
        self.check(x)?;
        grad_out.expect_shape("prelu backward", x.shape())?;
        let freq = x.freq();
        let mut dx = grad_out.clone();
        let (slope, dslope) = p.value_and_grad(self.slope);
        for b in 0..x.batch() {
            for t in 0..x.time() {
                let xf = x.frame(b, t);
                let gf = dx.frame_mut(b, t);
                for c in 0..self.channels {
                    for i in c * freq..(c + 1) * freq {
                        if xf[i] <= T::zero() {
                            dslope[c] += gf[i] * xf[i];
                            gf[i] *= slope[c];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

pub fn sigmoid_slice<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = sigmoid(*v));
}

pub fn tanh_slice<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

/// Input gradient of the sigmoid given its output `y`.
pub fn sigmoid_backward<T: Real>(y: &[T], grad_out: &[T]) -> Vec<T> {
    y.iter()
        .zip(grad_out)
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect()
}

/// Input gradient of tanh given its output `y`.
pub fn tanh_backward<T: Real>(y: &[T], grad_out: &[T]) -> Vec<T> {
    y.iter()
        .zip(grad_out)
        .map(|(&y, &g)| g * (T::one() - y * y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prelu_definition() {
        let mut b = ParamBuilder::<f64>::new(0);
        let act = Prelu::new(1, &mut b).unwrap();
        let p = b.finish();
        let x = FeatureTensor::from_bctf([1, 1, 1, 3], &[-1.0, 2.0, 0.0]).unwrap();
        let y = act.forward(&p, &x).unwrap();
        assert_eq!(y.to_bctf(), vec![-0.25, 2.0, 0.0]);
    }

    #[test]
    fn bounded_activations() {
        let mut v = vec![0.0f64, -40.0, 40.0, 1e6, -1e6];
        let mut t = v.clone();
        sigmoid_slice(&mut v);
        tanh_slice(&mut t);
        assert_eq!(v[0], 0.5);
        assert_eq!(t[0], 0.0);
        assert!(v.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert!(t.iter().all(|&s| (-1.0..=1.0).contains(&s)));
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut y = vec![0.0f64; 4];
        sigmoid_slice(&mut y);
        let g = sigmoid_backward(&y, &[1.0; 4]);
        assert!(g.iter().all(|&v| v == 0.25));
    }
}
