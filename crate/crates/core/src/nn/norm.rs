use crate::error::{Error, Result};
use crate::nn::params::ParamBuilder;
use crate::nn::{cast, FeatureTensor, ModelParams, ParamId, Real};

pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `(batch, time, frequency)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

/// Saved activations for the batch-norm backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: FeatureTensor<T>,
    inv_std: Vec<T>,
}

impl BatchNorm2d {
    pub fn new<T: Real>(channels: usize, b: &mut ParamBuilder<T>) -> Result<Self> {
        Ok(Self {
            channels,
            gamma: b.constant("gamma", &[channels], 1.0)?,
            beta: b.constant("beta", &[channels], 0.0)?,
            running_mean: b.buffer("running_mean", &[channels], 0.0)?,
            running_var: b.buffer("running_var", &[channels], 1.0)?,
        })
    }

    fn check<T: Real>(&self, x: &FeatureTensor<T>) -> Result<()> {
        if x.channels() != self.channels {
            return Err(Error::shape(
                "batchnorm",
                format!("expected {} channels, got {}", self.channels, x.channels()),
            ));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and folds them into the running averages.
    pub fn forward_train<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &FeatureTensor<T>,
    ) -> Result<(FeatureTensor<T>, BnCache<T>)> {
        self.check(x)?;
        let [batch, ch, time, freq] = x.shape();
        let n = batch * time * freq;
        let count: T = cast(n as f64);
        let mut mean = vec![T::zero(); ch];
        let mut var = vec![T::zero(); ch];
        for b in 0..batch {
            for t in 0..time {
                for (c, row) in x.frame(b, t).chunks_exact(freq).enumerate() {
                    mean[c] += row.iter().copied().sum::<T>();
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for b in 0..batch {
            for t in 0..time {
                for (c, row) in x.frame(b, t).chunks_exact(freq).enumerate() {
                    var[c] += row.iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<T>();
                }
            }
        }
        var.iter_mut().for_each(|v| *v /= count);
        let eps: T = cast(NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        let mut xhat = x.clone();
        let mut y = x.clone();
        let (gamma, beta) = (p.value(self.gamma).to_vec(), p.value(self.beta).to_vec());
        for b in 0..batch {
            for t in 0..time {
                let hf = xhat.frame_mut(b, t);
                for c in 0..ch {
                    for v in &mut hf[c * freq..(c + 1) * freq] {
                        *v = (*v - mean[c]) * inv_std[c];
                    }
                }
                let hf = xhat.frame(b, t);
                let yf = y.frame_mut(b, t);
                for c in 0..ch {
                    for i in c * freq..(c + 1) * freq {
                        yf[i] = hf[i] * gamma[c] + beta[c];
                    }
                }
            }
        }

        let momentum: T = cast(BN_MOMENTUM);
        let unbias: T = if n > 1 {
            cast(n as f64 / (n as f64 - 1.0))
        } else {
            T::one()
        };
        for (rm, &m) in p.value_mut(self.running_mean).iter_mut().zip(&mean) {
            *rm = (T::one() - momentum) * *rm + momentum * m;
        }
        for (rv, &v) in p.value_mut(self.running_var).iter_mut().zip(&var) {
            *rv = (T::one() - momentum) * *rv + momentum * v * unbias;
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    /// In-place eval-mode normalization of one `channels x freq` frame.
    pub fn apply_frame_eval<T: Real>(&self, p: &ModelParams<T>, frame: &mut [T], freq: usize) {
        let eps: T = cast(NORM_EPS);
        let gamma = p.value(self.gamma);
        let beta = p.value(self.beta);
        let mean = p.value(self.running_mean);
        let var = p.value(self.running_var);
        for (c, row) in frame.chunks_exact_mut(freq).enumerate() {
            let scale = gamma[c] / (var[c] + eps).sqrt();
            for v in row {
                *v = (*v - mean[c]) * scale + beta[c];
            }
        }
    }

    pub fn forward_eval<T: Real>(&self, p: &ModelParams<T>, x: &FeatureTensor<T>) -> Result<FeatureTensor<T>> {
        self.check(x)?;
        let mut y = x.clone();
        let freq = x.freq();
        for b in 0..x.batch() {
            for t in 0..x.time() {
                self.apply_frame_eval(p, y.frame_mut(b, t), freq);
            }
        }
        Ok(y)
    }

    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        cache: &BnCache<T>,
        grad_out: &FeatureTensor<T>,
    ) -> Result<FeatureTensor<T>> {
        grad_out.expect_shape("batchnorm backward", cache.xhat.shape())?;
        let [batch, ch, time, freq] = grad_out.shape();
        let count: T = cast((batch * time * freq) as f64);
        let mut sum_g = vec![T::zero(); ch];
        let mut sum_gx = vec![T::zero(); ch];
        for b in 0..batch {
            for t in 0..time {
                let gf = grad_out.frame(b, t);
                let hf = cache.xhat.frame(b, t);
                for c in 0..ch {
                    for i in c * freq..(c + 1) * freq {
                        sum_g[c] += gf[i];
                        sum_gx[c] += gf[i] * hf[i];
                    }
                }
            }
        }
        for (g, &s) in p.grad_mut(self.beta).iter_mut().zip(&sum_g) {
            *g += s;
        }
        for (g, &s) in p.grad_mut(self.gamma).iter_mut().zip(&sum_gx) {
            *g += s;
        }
        let gamma = p.value(self.gamma);
        let mut dx = grad_out.clone();
        for b in 0..batch {
            for t in 0..time {
                let hf = cache.xhat.frame(b, t);
                let df = dx.frame_mut(b, t);
                for c in 0..ch {
                    let k = gamma[c] * cache.inv_std[c] / count;
                    for i in c * freq..(c + 1) * freq {
                        df[i] = k * (count * df[i] - sum_g[c] - hf[i] * sum_gx[c]);
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Normalization across the channel axis at every `(batch, time, frequency)` position.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub width: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct LnCache<T> {
    xhat: FeatureTensor<T>,
    /// One entry per (batch, time, freq) position, frame-major.
    inv_std: Vec<T>,
}

impl LayerNorm {
    pub fn new<T: Real>(width: usize, b: &mut ParamBuilder<T>) -> Result<Self> {
        Ok(Self {
            width,
            gamma: b.constant("gamma", &[width], 1.0)?,
            beta: b.constant("beta", &[width], 0.0)?,
        })
    }

    fn check<T: Real>(&self, x: &FeatureTensor<T>) -> Result<()> {
        if x.channels() != self.width {
            return Err(Error::shape(
                "layernorm",
                format!("expected width {}, got {}", self.width, x.channels()),
            ));
        }
        Ok(())
    }

    /// Normalizes one frame in place; pushes `inv_std` per frequency when `record` is given.
    fn normalize_frame<T: Real>(
        &self,
        frame: &mut [T],
        freq: usize,
        mut record: Option<&mut Vec<T>>,
    ) {
        let w = self.width;
        let wt: T = cast(w as f64);
        let eps: T = cast(NORM_EPS);
        for f in 0..freq {
            let mut mean = T::zero();
            for c in 0..w {
                mean += frame[c * freq + f];
            }
            mean /= wt;
            let mut var = T::zero();
            for c in 0..w {
                let d = frame[c * freq + f] - mean;
                var += d * d;
            }
            var /= wt;
            let inv = T::one() / (var + eps).sqrt();
            for c in 0..w {
                let v = &mut frame[c * freq + f];
                *v = (*v - mean) * inv;
            }
            if let Some(r) = record.as_deref_mut() {
                r.push(inv);
            }
        }
    }

    fn affine_frame<T: Real>(&self, p: &ModelParams<T>, frame: &mut [T], freq: usize) {
        let gamma = p.value(self.gamma);
        let beta = p.value(self.beta);
        for (c, row) in frame.chunks_exact_mut(freq).enumerate() {
            for v in row {
                *v = *v * gamma[c] + beta[c];
            }
        }
    }

    pub fn apply_frame<T: Real>(&self, p: &ModelParams<T>, frame: &mut [T], freq: usize) {
        self.normalize_frame(frame, freq, None);
        self.affine_frame(p, frame, freq);
    }

    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        x: &FeatureTensor<T>,
    ) -> Result<(FeatureTensor<T>, LnCache<T>)> {
        self.check(x)?;
        let freq = x.freq();
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.batch() * x.time() * freq);
        for b in 0..x.batch() {
            for t in 0..x.time() {
                self.normalize_frame(xhat.frame_mut(b, t), freq, Some(&mut inv_std));
            }
        }
        let mut y = xhat.clone();
        for b in 0..x.batch() {
            for t in 0..x.time() {
                self.affine_frame(p, y.frame_mut(b, t), freq);
            }
        }
        Ok((y, LnCache { xhat, inv_std }))
    }

    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        cache: &LnCache<T>,
        grad_out: &FeatureTensor<T>,
    ) -> Result<FeatureTensor<T>> {
        grad_out.expect_shape("layernorm backward", cache.xhat.shape())?;
        let [batch, w, time, freq] = grad_out.shape();
        let wt: T = cast(w as f64);
        {
            let mut dgamma = vec![T::zero(); w];
            let mut dbeta = vec![T::zero(); w];
            for b in 0..batch {
                for t in 0..time {
                    let gf = grad_out.frame(b, t);
                    let hf = cache.xhat.frame(b, t);
                    for c in 0..w {
                        for i in c * freq..(c + 1) * freq {
                            dgamma[c] += gf[i] * hf[i];
                            dbeta[c] += gf[i];
                        }
                    }
                }
            }
            for (g, d) in p.grad_mut(self.gamma).iter_mut().zip(&dgamma) {
                *g += *d;
            }
            for (g, d) in p.grad_mut(self.beta).iter_mut().zip(&dbeta) {
                *g += *d;
            }
        }
        let gamma = p.value(self.gamma);
        let mut dx = grad_out.clone();
        let mut pos = 0;
        for b in 0..batch {
            for t in 0..time {
                let hf = cache.xhat.frame(b, t);
                let df = dx.frame_mut(b, t);
                for f in 0..freq {
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for c in 0..w {
                        let d = df[c * freq + f] * gamma[c];
                        sum_d += d;
                        sum_dx += d * hf[c * freq + f];
                    }
                    let inv = cache.inv_std[pos];
                    pos += 1;
                    for c in 0..w {
                        let i = c * freq + f;
                        let d = df[i] * gamma[c];
                        df[i] = inv / wt * (wt * d - sum_d - hf[i] * sum_dx);
                    }
                }
            }
        }
        Ok(dx)
    }
}
