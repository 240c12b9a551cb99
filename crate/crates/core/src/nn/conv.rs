//! Causal 2-D convolution and transposed convolution over `(time, frequency)`.
//!
//! Time is never padded on the future side: output frame `t` reads input
//! frames `t - kernel_t + 1 ..= t` only. Both layers evaluate one output
//! frame at a time so offline and streaming inference share the exact same
//! arithmetic.
//!
//! Weights are stored `[out, kernel_f, in, kernel_t]`. Each frame's input is
//! gathered into `[f_in][in * kernel_t]` rows, so an output bin is a sum over
//! `kernel_f` of one contiguous dot product.

use crate::error::{Error, Result};
use crate::nn::params::ParamBuilder;
use crate::nn::{axpy, dot, dot4, FeatureTensor, ModelParams, ParamId, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_f: usize,
    pub kernel_t: usize,
    pub stride_f: usize,
    pub pad_f: usize,
}

impl ConvSpec {
    /// Kernel (5, 2) over (frequency, time), stride 2 in frequency, padding 2.
    pub fn encoder(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel_f: 5,
            kernel_t: 2,
            stride_f: 2,
            pad_f: 2,
        }
    }

    pub fn pointwise(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel_f: 1,
            kernel_t: 1,
            stride_f: 1,
            pad_f: 0,
        }
    }

    fn row(&self) -> usize {
        self.in_ch * self.kernel_t
    }

    fn taps(&self) -> usize {
        self.row() * self.kernel_f
    }

    pub fn num_weights(&self) -> usize {
        self.out_ch * self.taps()
    }

    /// Flat offset of weight `(co, ci, kt, kf)`.
    pub fn weight_index(&self, co: usize, ci: usize, kt: usize, kf: usize) -> usize {
        ((co * self.kernel_f + kf) * self.in_ch + ci) * self.kernel_t + kt
    }

    fn validate(&self) -> Result<()> {
        if self.in_ch == 0
            || self.out_ch == 0
            || self.kernel_f == 0
            || self.kernel_t == 0
            || self.stride_f == 0
        {
            return Err(Error::invalid(format!("degenerate convolution {self:?}")));
        }
        Ok(())
    }

    fn register<T: Real>(&self, b: &mut ParamBuilder<T>) -> Result<(ParamId, ParamId)> {
        self.validate()?;
        let fan_in = self.taps() as f64;
        // Kaiming-uniform gain for a PReLU slope of 0.25.
        let bound = (6.0 / ((1.0 + 0.25f64.powi(2)) * fan_in)).sqrt();
        let w = b.uniform(
            "weight",
            &[self.out_ch, self.kernel_f, self.in_ch, self.kernel_t],
            bound,
        )?;
        let bias = b.constant("bias", &[self.out_ch], 0.0)?;
        Ok((w, bias))
    }

    /// Copies the frames in `history` into `[f_in][in * kernel_t]` rows.
    fn gather<T: Real>(&self, history: &[Option<&[T]>], f_in: usize, xt: &mut Vec<T>) {
        let (row, kt) = (self.row(), self.kernel_t);
        xt.clear();
        xt.resize(f_in * row, T::zero());
        for (k, frame) in history.iter().take(kt).enumerate() {
            let Some(x) = frame else { continue };
            for ci in 0..self.in_ch {
                let src = &x[ci * f_in..(ci + 1) * f_in];
                for (fi, &v) in src.iter().enumerate() {
                    xt[fi * row + ci * kt + k] = v;
                }
            }
        }
    }

    fn scatter<T: Real>(&self, dxt: &[T], f_in: usize, dhist: &mut [Option<&mut [T]>]) {
        let (row, kt) = (self.row(), self.kernel_t);
        for (k, frame) in dhist.iter_mut().take(kt).enumerate() {
            let Some(dx) = frame else { continue };
            for ci in 0..self.in_ch {
                let dst = &mut dx[ci * f_in..(ci + 1) * f_in];
                for (fi, d) in dst.iter_mut().enumerate() {
                    *d += dxt[fi * row + ci * kt + k];
                }
            }
        }
    }
}

/// Output bins `fo0 + j * dfo` read input rows `fi0 + j * dfi` for `j < n`.
#[derive(Debug, Clone, Copy, Default)]
struct Run {
    fo0: usize,
    dfo: usize,
    fi0: usize,
    dfi: usize,
    n: usize,
}

/// `out[co][fo] = bias[co] + sum_kf <weight[co][kf], xt[fi(fo, kf)]>` for one frame.
fn frame_forward<T: Real>(
    spec: &ConvSpec,
    weight: &[T],
    bias: &[T],
    xt: &[T],
    runs: &[Run],
    f_out: usize,
    out: &mut [T],
) {
    let row = spec.row();
    let xrow = |fi: usize| &xt[fi * row..(fi + 1) * row];
    for (co, &b) in bias.iter().enumerate() {
        let orow = &mut out[co * f_out..(co + 1) * f_out];
        orow.fill(b);
        for (kf, r) in runs.iter().enumerate() {
            let wrow = &weight[(co * spec.kernel_f + kf) * row..][..row];
            let mut j = 0;
            while j + 4 <= r.n {
                let fi = |i: usize| r.fi0 + (j + i) * r.dfi;
                let d = dot4(wrow, [xrow(fi(0)), xrow(fi(1)), xrow(fi(2)), xrow(fi(3))]);
                for (i, v) in d.into_iter().enumerate() {
                    orow[r.fo0 + (j + i) * r.dfo] += v;
                }
                j += 4;
            }
            for j in j..r.n {
                orow[r.fo0 + j * r.dfo] += dot(wrow, xrow(r.fi0 + j * r.dfi));
            }
        }
    }
}

/// Accumulates weight and bias gradients and writes the gathered-input gradient into `dxt`.
#[allow(clippy::too_many_arguments)]
fn frame_backward<T: Real>(
    spec: &ConvSpec,
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    xt: &[T],
    runs: &[Run],
    grad_out: &[T],
    f_out: usize,
    dxt: &mut [T],
) {
    let row = spec.row();
    dxt.fill(T::zero());
    for (co, db) in dbias.iter_mut().enumerate() {
        let grow = &grad_out[co * f_out..(co + 1) * f_out];
        *db += grow.iter().copied().sum::<T>();
        for (kf, r) in runs.iter().enumerate() {
            let at = (co * spec.kernel_f + kf) * row;
            let wrow = &weight[at..at + row];
            let dwrow = &mut dweight[at..at + row];
            for j in 0..r.n {
                let g = grow[r.fo0 + j * r.dfo];
                if g == T::zero() {
                    continue;
                }
                let fi = r.fi0 + j * r.dfi;
                axpy(g, &xt[fi * row..(fi + 1) * row], dwrow);
                axpy(g, wrow, &mut dxt[fi * row..(fi + 1) * row]);
            }
        }
    }
}

/// Causal convolution, weight layout `[out, kernel_f, in, kernel_t]`.
#[derive(Debug, Clone)]
pub struct Conv2dCausal {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2dCausal {
    pub fn new<T: Real>(spec: ConvSpec, b: &mut ParamBuilder<T>) -> Result<Self> {
        let (weight, bias) = spec.register(b)?;
        Ok(Self { spec, weight, bias })
    }

    pub fn out_freq(&self, f_in: usize) -> usize {
        let s = &self.spec;
        (f_in + 2 * s.pad_f).saturating_sub(s.kernel_f) / s.stride_f + 1
    }

    /// Input bin `fo * stride + kf - pad` for every valid output bin, per `kf`.
    fn runs(&self, f_in: usize, f_out: usize) -> Vec<Run> {
        let s = &self.spec;
        (0..s.kernel_f)
            .map(|kf| {
                let lo = (s.pad_f.saturating_sub(kf)).div_ceil(s.stride_f);
                let end = (f_in + s.pad_f).saturating_sub(kf).div_ceil(s.stride_f).min(f_out);
                if lo >= end {
                    return Run::default();
                }
                Run {
                    fo0: lo,
                    dfo: 1,
                    fi0: lo * s.stride_f + kf - s.pad_f,
                    dfi: s.stride_f,
                    n: end - lo,
                }
            })
            .collect()
    }

    /// Computes a single output frame; `history[k]` holds input frame
    /// `t - kernel_t + 1 + k` and `None` is zero padding.
    pub fn forward_frame<T: Real>(
        &self,
        p: &ModelParams<T>,
        history: &[Option<&[T]>],
        f_in: usize,
        out: &mut [T],
        scratch: &mut Vec<T>,
    ) {
        let f_out = self.out_freq(f_in);
        self.spec.gather(history, f_in, scratch);
        let runs = self.runs(f_in, f_out);
        frame_forward(
            &self.spec,
            p.value(self.weight),
            p.value(self.bias),
            scratch,
            &runs,
            f_out,
            out,
        );
    }

    fn check_input<T: Real>(&self, x: &FeatureTensor<T>) -> Result<()> {
        if x.channels() != self.spec.in_ch {
            return Err(Error::shape(
                "conv2d",
                format!("expected {} input channels, got {}", self.spec.in_ch, x.channels()),
            ));
        }
        Ok(())
    }

    fn history<'a, T: Real>(&self, x: &'a FeatureTensor<T>, b: usize, t: usize) -> Vec<Option<&'a [T]>> {
        let kt = self.spec.kernel_t;
        (0..kt)
            .map(|k| {
                let ti = t as isize - (kt - 1) as isize + k as isize;
                (ti >= 0).then(|| x.frame(b, ti as usize))
            })
            .collect()
    }

    pub fn forward<T: Real>(&self, p: &ModelParams<T>, x: &FeatureTensor<T>) -> Result<FeatureTensor<T>> {
        self.check_input(x)?;
        let f_in = x.freq();
        let f_out = self.out_freq(f_in);
        let mut y = FeatureTensor::zeros(x.batch(), self.spec.out_ch, x.time(), f_out);
        let mut xt = Vec::new();
        for b in 0..x.batch() {
            for t in 0..x.time() {
                let hist = self.history(x, b, t);
                self.forward_frame(p, &hist, f_in, y.frame_mut(b, t), &mut xt);
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &FeatureTensor<T>,
        grad_out: &FeatureTensor<T>,
    ) -> Result<FeatureTensor<T>> {
        self.check_input(x)?;
        let f_in = x.freq();
        let f_out = self.out_freq(f_in);
        grad_out.expect_shape("conv2d backward", [x.batch(), self.spec.out_ch, x.time(), f_out])?;
        let kt = self.spec.kernel_t;
        let runs = self.runs(f_in, f_out);
        let mut dx = FeatureTensor::zeros(x.batch(), x.channels(), x.time(), f_in);
        let mut xt = Vec::new();
        let mut dxt = vec![T::zero(); f_in * self.spec.row()];
        let mut dbias = vec![T::zero(); self.spec.out_ch];
        let frame_len = x.frame_len();
        for b in 0..x.batch() {
            for t in 0..x.time() {
                let hist = self.history(x, b, t);
                self.spec.gather(&hist, f_in, &mut xt);
                let (w, dw) = p.value_and_grad(self.weight);
                frame_backward(&self.spec, w, dw, &mut dbias, &xt, &runs, grad_out.frame(b, t), f_out, &mut dxt);
                // Input gradients for frames t-kt+1..=t live contiguously in dx.
                let first = t as isize - (kt - 1) as isize;
                let lo = first.max(0) as usize;
                let span = &mut dx.as_mut_slice()
                    [(b * x.time() + lo) * frame_len..(b * x.time() + t + 1) * frame_len];
                let mut chunks = span.chunks_exact_mut(frame_len);
                let mut dhist: Vec<Option<&mut [T]>> = (0..kt)
                    .map(|k| {
                        if first + (k as isize) < 0 {
                            None
                        } else {
                            chunks.next()
                        }
                    })
                    .collect();
                self.spec.scatter(&dxt, f_in, &mut dhist);
            }
        }
        for (g, d) in p.grad_mut(self.bias).iter_mut().zip(&dbias) {
            *g += *d;
        }
        Ok(dx)
    }
}

/// Causal transposed convolution, weight layout `[out, kernel_f, in, kernel_t]`.
///
/// The full transposed output is trimmed in frequency to the requested size
/// (as evenly as possible on both edges) and in time on the future side.
#[derive(Debug, Clone)]
pub struct TConv2dCausal {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl TConv2dCausal {
    pub fn new<T: Real>(spec: ConvSpec, b: &mut ParamBuilder<T>) -> Result<Self> {
        let (weight, bias) = spec.register(b)?;
        Ok(Self { spec, weight, bias })
    }

    /// Untrimmed transposed-convolution output length.
    pub fn full_freq(&self, f_in: usize) -> usize {
        (f_in - 1) * self.spec.stride_f + self.spec.kernel_f
    }

    /// Output size that undoes [`Conv2dCausal::out_freq`] for an odd input size.
    pub fn mirrored_freq(&self, f_in: usize) -> usize {
        (f_in - 1) * self.spec.stride_f + self.spec.kernel_f - 2 * self.spec.pad_f
    }

    fn trim_left(&self, f_in: usize, f_out: usize) -> Result<usize> {
        let full = self.full_freq(f_in);
        if f_out > full || f_out == 0 {
            return Err(Error::shape(
                "tconv2d",
                format!("cannot produce {f_out} bins from {f_in} (full size {full})"),
            ));
        }
        Ok((full - f_out) / 2)
    }

    /// Output bin `fo` receives input bin `fi` through tap `kf` when
    /// `fo + trim = fi * stride + kf`.
    fn runs(&self, f_in: usize, f_out: usize, trim: usize) -> Vec<Run> {
        let s = self.spec.stride_f;
        (0..self.spec.kernel_f)
            .map(|kf| {
                let m = kf.max(trim);
                let full0 = kf + (m - kf).div_ceil(s) * s;
                let (fo0, fi0) = (full0 - trim, (full0 - kf) / s);
                if fo0 >= f_out || fi0 >= f_in {
                    return Run::default();
                }
                Run {
                    fo0,
                    dfo: s,
                    fi0,
                    dfi: 1,
                    n: (f_out - fo0).div_ceil(s).min(f_in - fi0),
                }
            })
            .collect()
    }

    /// `history[k]` holds input frame `t - k`; `None` is zero padding.
    pub fn forward_frame<T: Real>(
        &self,
        p: &ModelParams<T>,
        history: &[Option<&[T]>],
        f_in: usize,
        f_out: usize,
        out: &mut [T],
        scratch: &mut Vec<T>,
    ) -> Result<()> {
        let trim = self.trim_left(f_in, f_out)?;
        self.spec.gather(history, f_in, scratch);
        let runs = self.runs(f_in, f_out, trim);
        frame_forward(
            &self.spec,
            p.value(self.weight),
            p.value(self.bias),
            scratch,
            &runs,
            f_out,
            out,
        );
        Ok(())
    }

    fn check_input<T: Real>(&self, x: &FeatureTensor<T>) -> Result<()> {
        if x.channels() != self.spec.in_ch {
            return Err(Error::shape(
                "tconv2d",
                format!("expected {} input channels, got {}", self.spec.in_ch, x.channels()),
            ));
        }
        Ok(())
    }

    fn history<'a, T: Real>(&self, x: &'a FeatureTensor<T>, b: usize, t: usize) -> Vec<Option<&'a [T]>> {
        (0..self.spec.kernel_t)
            .map(|k| (t >= k).then(|| x.frame(b, t - k)))
            .collect()
    }

    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        x: &FeatureTensor<T>,
        f_out: usize,
    ) -> Result<FeatureTensor<T>> {
        self.check_input(x)?;
        let mut y = FeatureTensor::zeros(x.batch(), self.spec.out_ch, x.time(), f_out);
        let mut xt = Vec::new();
        for b in 0..x.batch() {
            for t in 0..x.time() {
                let hist = self.history(x, b, t);
                self.forward_frame(p, &hist, x.freq(), f_out, y.frame_mut(b, t), &mut xt)?;
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
        self.check_input(x)?;
        let f_in = x.freq();
        let f_out = grad_out.freq();
        grad_out.expect_shape("tconv2d backward", [x.batch(), self.spec.out_ch, x.time(), f_out])?;
        let trim = self.trim_left(f_in, f_out)?;
        let runs = self.runs(f_in, f_out, trim);
        let kt = self.spec.kernel_t;
        let frame_len = x.frame_len();
        let mut dx = FeatureTensor::zeros(x.batch(), x.channels(), x.time(), f_in);
        let mut xt = Vec::new();
        let mut dxt = vec![T::zero(); f_in * self.spec.row()];
        let mut dbias = vec![T::zero(); self.spec.out_ch];
        for b in 0..x.batch() {
            for t in 0..x.time() {
                let hist = self.history(x, b, t);
                self.spec.gather(&hist, f_in, &mut xt);
                let (w, dw) = p.value_and_grad(self.weight);
                frame_backward(&self.spec, w, dw, &mut dbias, &xt, &runs, grad_out.frame(b, t), f_out, &mut dxt);
                let lo = t.saturating_sub(kt - 1);
                let span = &mut dx.as_mut_slice()
                    [(b * x.time() + lo) * frame_len..(b * x.time() + t + 1) * frame_len];
                // history order is newest first
                let mut frames: Vec<Option<&mut [T]>> =
                    span.chunks_exact_mut(frame_len).rev().map(Some).collect();
                frames.resize_with(kt, || None);
                self.spec.scatter(&dxt, f_in, &mut frames);
            }
        }
        for (g, d) in p.grad_mut(self.bias).iter_mut().zip(&dbias) {
            *g += *d;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], seed: u64) -> FeatureTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureTensor::from_bctf(shape, &v).unwrap()
    }

    #[test]
    fn encoder_size_chain() {
        let mut b = ParamBuilder::<f64>::new(0);
        let conv = Conv2dCausal::new(ConvSpec::encoder(1, 1), &mut b).unwrap();
        let mut f = 257;
        let mut chain = vec![f];
        for _ in 0..5 {
            f = conv.out_freq(f);
            chain.push(f);
        }
        assert_eq!(chain, vec![257, 129, 65, 33, 17, 9]);
        b.push_scope("dec");
        let tconv = TConv2dCausal::new(ConvSpec::encoder(1, 1), &mut b).unwrap();
        let mut back = vec![9];
        for _ in 0..5 {
            let n = tconv.mirrored_freq(*back.last().unwrap());
            back.push(n);
        }
        assert_eq!(back, vec![9, 17, 33, 65, 129, 257]);
    }

    #[test]
    fn pointwise_identity() {
        let mut b = ParamBuilder::<f64>::new(0);
        let conv = Conv2dCausal::new(ConvSpec::pointwise(3, 3), &mut b).unwrap();
        let mut p = b.finish();
        let w = p.value_mut(conv.weight);
        w.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let x = random_tensor([2, 3, 4, 7], 1);
        assert_eq!(conv.forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut b = ParamBuilder::<f64>::new(0);
        let conv = Conv2dCausal::new(ConvSpec::encoder(2, 4), &mut b).unwrap();
        b.push_scope("dec");
        let tconv = TConv2dCausal::new(ConvSpec::encoder(4, 3), &mut b).unwrap();
        let mut p = b.finish();
        p.value_mut(conv.bias).copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        p.value_mut(tconv.bias).copy_from_slice(&[-1.0, 0.0, 1.0]);
        let y = conv.forward(&p, &FeatureTensor::zeros(1, 2, 3, 17)).unwrap();
        for t in 0..3 {
            for f in 0..9 {
                for c in 0..4 {
                    assert_eq!(y.get(0, c, t, f), [0.1, 0.2, 0.3, 0.4][c]);
                }
            }
        }
        let z = tconv.forward(&p, &FeatureTensor::zeros(1, 4, 3, 9), 17).unwrap();
        assert!((0..17).all(|f| z.get(0, 2, 1, f) == 1.0 && z.get(0, 0, 2, f) == -1.0));
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut b = ParamBuilder::<f64>::new(3);
        let conv = Conv2dCausal::new(ConvSpec::encoder(2, 3), &mut b).unwrap();
        let p = b.finish();
        let x = random_tensor([1, 2, 4, 11], 2);
        let y = conv.forward(&p, &x).unwrap();
        let w = p.value(conv.weight);
        for co in 0..3 {
            for t in 0..4 {
                for fo in 0..conv.out_freq(11) {
                    let mut acc = 0.0;
                    for ci in 0..2 {
                        for kt in 0..2 {
                            for kf in 0..5 {
                                let ti = t as isize - 1 + kt as isize;
                                let fi = (2 * fo + kf) as isize - 2;
                                if ti >= 0 && (0..11).contains(&fi) {
                                    acc += w[conv.spec.weight_index(co, ci, kt, kf)]
                                        * x.get(0, ci, ti as usize, fi as usize);
                                }
                            }
                        }
                    }
                    assert!((y.get(0, co, t, fo) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tconv_matches_scatter_definition() {
        let mut b = ParamBuilder::<f64>::new(4);
        let tconv = TConv2dCausal::new(ConvSpec::encoder(2, 2), &mut b).unwrap();
        let p = b.finish();
        let x = random_tensor([1, 2, 3, 5], 9);
        let y = tconv.forward(&p, &x, 9).unwrap();
        let w = p.value(tconv.weight);
        // scatter each input element into the full output, then crop
        let full = tconv.full_freq(5);
        let mut acc = vec![0.0; 2 * 4 * full];
        for ci in 0..2 {
            for t in 0..3 {
                for fi in 0..5 {
                    for co in 0..2 {
                        for kt in 0..2 {
                            for kf in 0..5 {
                                acc[(co * 4 + t + kt) * full + fi * 2 + kf] +=
                                    w[tconv.spec.weight_index(co, ci, kt, kf)] * x.get(0, ci, t, fi);
                            }
                        }
                    }
                }
            }
        }
        let trim = (full - 9) / 2;
        for co in 0..2 {
            for t in 0..3 {
                for fo in 0..9 {
                    assert!((y.get(0, co, t, fo) - acc[(co * 4 + t) * full + fo + trim]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn future_frames_do_not_leak() {
        let mut b = ParamBuilder::<f64>::new(5);
        let conv = Conv2dCausal::new(ConvSpec::encoder(2, 3), &mut b).unwrap();
        b.push_scope("dec");
        let tconv = TConv2dCausal::new(ConvSpec::encoder(3, 2), &mut b).unwrap();
        let p = b.finish();
        let x = random_tensor([1, 2, 8, 17], 6);
        let base = tconv.forward(&p, &conv.forward(&p, &x).unwrap(), 17).unwrap();
        for t in 0..7 {
            let mut x2 = x.clone();
            for tt in t + 1..8 {
                x2.frame_mut(0, tt).iter_mut().for_each(|v| *v += 3.0);
            }
            let y = tconv.forward(&p, &conv.forward(&p, &x2).unwrap(), 17).unwrap();
            for tt in 0..=t {
                assert_eq!(y.frame(0, tt), base.frame(0, tt));
            }
            assert_ne!(y.frame(0, t + 1), base.frame(0, t + 1));
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let mut b = ParamBuilder::<f64>::new(0);
        let conv = Conv2dCausal::new(ConvSpec::encoder(2, 3), &mut b).unwrap();
        let p = b.finish();
        let err = conv.forward(&p, &FeatureTensor::zeros(1, 3, 2, 9)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
