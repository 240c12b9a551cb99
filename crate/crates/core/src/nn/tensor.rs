use crate::error::{Error, Result};
use crate::nn::Real;

/// Rank-4 feature map indexed `(batch, channel, time, frequency)`.
///
/// Storage is time-major (`batch, time, channel, frequency`) so that the
/// `channels x freq` block of one frame is contiguous; streaming inference
/// consumes exactly one such block per step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    batch: usize,
    channels: usize,
    time: usize,
    freq: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureTensor<T> {
    pub fn zeros(batch: usize, channels: usize, time: usize, freq: usize) -> Self {
        Self {
            batch,
            channels,
            time,
            freq,
            data: vec![T::zero(); batch * channels * time * freq],
        }
    }

    /// Builds a tensor from values in `(batch, channel, time, frequency)` order.
    pub fn from_bctf(shape: [usize; 4], values: &[T]) -> Result<Self> {
        let [b, c, t, f] = shape;
        if values.len() != b * c * t * f {
            return Err(Error::shape(
                "feature tensor",
                format!("{} values for shape {shape:?}", values.len()),
            ));
        }
        let mut out = Self::zeros(b, c, t, f);
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    let src = ((bi * c + ci) * t + ti) * f;
                    let dst = out.offset(bi, ci, ti, 0);
                    out.data[dst..dst + f].copy_from_slice(&values[src..src + f]);
                }
            }
        }
        Ok(out)
    }

    /// Values flattened in `(batch, channel, time, frequency)` order.
    pub fn to_bctf(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for b in 0..self.batch {
            for c in 0..self.channels {
                for t in 0..self.time {
                    let s = self.offset(b, c, t, 0);
                    out.extend_from_slice(&self.data[s..s + self.freq]);
                }
            }
        }
        out
    }

    /// `(batch, channels, time, freq)`
    pub fn shape(&self) -> [usize; 4] {
        [self.batch, self.channels, self.time, self.freq]
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn freq(&self) -> usize {
        self.freq
    }

    #[inline]
    fn offset(&self, b: usize, c: usize, t: usize, f: usize) -> usize {
        ((b * self.time + t) * self.channels + c) * self.freq + f
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize, f: usize) -> T {
        self.data[self.offset(b, c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, f: usize, v: T) {
        let o = self.offset(b, c, t, f);
        self.data[o] = v;
    }

    /// Contiguous `channels x freq` block of one frame.
    pub fn frame(&self, b: usize, t: usize) -> &[T] {
        let n = self.channels * self.freq;
        let s = (b * self.time + t) * n;
        &self.data[s..s + n]
    }

    pub fn frame_mut(&mut self, b: usize, t: usize) -> &mut [T] {
        let n = self.channels * self.freq;
        let s = (b * self.time + t) * n;
        &mut self.data[s..s + n]
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.freq
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            batch: self.batch,
            channels: self.channels,
            time: self.time,
            freq: self.freq,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn expect_shape(&self, stage: &str, shape: [usize; 4]) -> Result<()> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(Error::shape(
                stage,
                format!("expected {shape:?}, got {:?}", self.shape()),
            ))
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<U: Real>(&self) -> FeatureTensor<U> {
        FeatureTensor {
            batch: self.batch,
            channels: self.channels,
            time: self.time,
            freq: self.freq,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }
}
