//! Neural network primitives with hand-written forward and backward passes.
//!
//! Every layer is generic over [`Real`] so the same code runs in single
//! precision for training and inference, and in double precision for
//! finite-difference verification.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod gru;
pub mod norm;
pub mod params;
pub mod tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use activation::Prelu;
pub use conv::{Conv2dCausal, ConvSpec, TConv2dCausal};
pub use gru::{BiGru, Gru, GruState};
pub use norm::{BatchNorm2d, LayerNorm};
pub use params::{ModelParams, ParamId};
pub use tensor::FeatureTensor;

/// Floating-point element type for network math.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[inline]
pub(crate) fn cast<T: Real>(v: f64) -> T {
    T::from_f64_lossy(v)
}

/// Whether normalization layers use batch statistics or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dot product with a fixed eight-lane accumulation order.
///
/// The lane split lets the compiler vectorize while keeping results
/// identical for identical inputs regardless of call site.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Four dot products sharing the left operand, each bit-identical to [`dot`].
#[inline]
pub fn dot4<T: Real>(a: &[T], rows: [&[T]; 4]) -> [T; 4] {
    let n = a.len();
    debug_assert!(rows.iter().all(|r| r.len() == n));
    let rows = rows.map(|r| &r[..n]);
    let mut acc = [[T::zero(); 8]; 4];
    let chunks = n / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        for (acc, row) in acc.iter_mut().zip(&rows) {
            let xb = &row[c * 8..c * 8 + 8];
            for l in 0..8 {
                acc[l] += xa[l] * xb[l];
            }
        }
    }
    let mut out = [T::zero(); 4];
    for (o, (acc, row)) in out.iter_mut().zip(acc.iter().zip(&rows)) {
        let mut tail = T::zero();
        for i in chunks * 8..n {
            tail += a[i] * row[i];
        }
        *o = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
    }
    out
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Returns the name of the first stage whose output holds a non-finite value.
pub(crate) fn check_finite<T: Real>(stage: &str, values: &[T]) -> crate::Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::Numerical(stage.to_string()))
    }
}
