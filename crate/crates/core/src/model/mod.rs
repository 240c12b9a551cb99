//! The enhancement network: convolutional encoder, parallel sequence modeling
//! blocks, transposed-convolution decoder and mask head.
//!
//! Two evaluation paths exist. [`Mpcrn::forward_layers`] runs layer by layer
//! over whole tensors and can record activations for backpropagation.
//! [`Mpcrn::step_frame`] advances a [`NetState`] by one frame and is what
//! offline eval and streaming inference both use, so the two agree bit for bit.

mod config;
pub mod psm;

pub use config::{MaskHead, ModelConfig};
pub(crate) use config::MODEL_KEYS;
pub use psm::PsmBlock;

use crate::dsp::{ComplexSpectrogram, Matrix};
use crate::error::{Error, Result};
use crate::nn::activation::Prelu;
use crate::nn::norm::BnCache;
use crate::nn::checkpoint;
use crate::nn::params::ParamBuilder;
use crate::nn::{
    check_finite, sigmoid, BatchNorm2d, Conv2dCausal, FeatureTensor, GruState, Mode, ModelParams,
    Real, TConv2dCausal,
};
use crate::recon::{CartesianMask, MaskTriple};
use psm::{PsmScratch, PsmTrace};

/// Sigmoid pre-activations are clamped to this range so single-precision outputs stay strictly inside (0, 1).
pub const MAG_LOGIT_LIMIT: f64 = 15.0;
/// Tanh pre-activations are clamped to this range so outputs stay strictly inside (-1, 1).
pub const PHASE_LOGIT_LIMIT: f64 = 8.0;

#[derive(Debug, Clone)]
struct EncBlock {
    conv: Conv2dCausal,
    bn: BatchNorm2d,
    act: Prelu,
}

#[derive(Debug, Clone)]
struct DecBlock {
    tconv: TConv2dCausal,
    /// Absent on the last block, whose output goes straight to the mask head.
    post: Option<(BatchNorm2d, Prelu)>,
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    input: FeatureTensor<T>,
    bn: Option<BnCache<T>>,
    act_in: Option<FeatureTensor<T>>,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    enc: Vec<BlockTrace<T>>,
    psm: Vec<PsmTrace<T>>,
    dec: Vec<BlockTrace<T>>,
    pre: FeatureTensor<T>,
    out: FeatureTensor<T>,
}

impl<T: Real> Trace<T> {
    /// Activated mask-head output.
    pub fn output(&self) -> &FeatureTensor<T> {
        &self.out
    }
}

#[derive(Debug, Clone)]
pub struct Mpcrn {
    cfg: ModelConfig,
    enc: Vec<EncBlock>,
    psm: Vec<PsmBlock>,
    dec: Vec<DecBlock>,
}

/// Per-stream recurrent and convolutional history for frame-at-a-time evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState<T> {
    bins: usize,
    /// Previous `kernel_t - 1` input frames of every encoder block, oldest first.
    enc_hist: Vec<Vec<Vec<T>>>,
    psm_h: Vec<GruState<T>>,
    /// Previous `kernel_t - 1` input frames of every decoder block, newest first.
    dec_hist: Vec<Vec<Vec<T>>>,
    frames: u64,
}

impl<T: Real> NetState<T> {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    /// Number of scalars held, independent of how many frames were processed.
    pub fn footprint(&self) -> usize {
        let hist = |h: &Vec<Vec<Vec<T>>>| h.iter().flatten().map(Vec::len).sum::<usize>();
        hist(&self.enc_hist) + hist(&self.dec_hist) + self.psm_h.iter().map(|s| s.hidden.len()).sum::<usize>()
    }

    pub fn reset(&mut self) {
        for v in self.enc_hist.iter_mut().chain(self.dec_hist.iter_mut()).flatten() {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
        for s in &mut self.psm_h {
            s.hidden.iter_mut().for_each(|x| *x = T::zero());
        }
        self.frames = 0;
    }
}

/// Reusable per-call buffers for [`Mpcrn::step_frame`].
#[derive(Debug, Clone, Default)]
pub struct StepScratch<T> {
    a: Vec<T>,
    b: Vec<T>,
    col: Vec<T>,
    psm: PsmScratch<T>,
}

impl Mpcrn {
    /// Builds the architecture and seeded initial parameters.
    pub fn new<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<(Self, ModelParams<T>)> {
        cfg.validate()?;
        let mut b = ParamBuilder::<T>::new(seed);
        let mut enc = Vec::new();
        let mut in_ch = cfg.input_channels;
        for (i, &out) in cfg.enc_channels.iter().enumerate() {
            b.push_scope(format!("enc{i}"));
            b.push_scope("conv");
            let conv = Conv2dCausal::new(cfg.conv_spec(in_ch, out), &mut b)?;
            b.pop_scope();
            b.push_scope("bn");
            let bn = BatchNorm2d::new(out, &mut b)?;
            b.pop_scope();
            b.push_scope("act");
            let act = Prelu::new(out, &mut b)?;
            b.pop_scope();
            b.pop_scope();
            enc.push(EncBlock { conv, bn, act });
            in_ch = out;
        }
        let mut psm = Vec::new();
        for (i, &h) in cfg.psm_hidden.iter().enumerate() {
            b.push_scope(format!("psm{i}"));
            psm.push(PsmBlock::new(in_ch, h, &mut b)?);
            b.pop_scope();
        }
        let mut dec = Vec::new();
        let n = cfg.dec_channels.len();
        for (i, &out) in cfg.dec_channels.iter().enumerate() {
            b.push_scope(format!("dec{i}"));
            b.push_scope("tconv");
            let tconv = TConv2dCausal::new(cfg.conv_spec(in_ch, out), &mut b)?;
            b.pop_scope();
            let post = if i + 1 < n {
                b.push_scope("bn");
                let bn = BatchNorm2d::new(out, &mut b)?;
                b.pop_scope();
                b.push_scope("act");
                let act = Prelu::new(out, &mut b)?;
                b.pop_scope();
                Some((bn, act))
            } else {
                None
            };
            b.pop_scope();
            dec.push(DecBlock { tconv, post });
            in_ch = out;
        }
        let model = Self {
            cfg: cfg.clone(),
            enc,
            psm,
            dec,
        };
        Ok((model, b.finish()))
    }

    /// Writes a checkpoint whose header is the model configuration.
    pub fn save<W: std::io::Write, T: Real>(&self, w: &mut W, p: &ModelParams<T>) -> Result<()> {
        checkpoint::write_checkpoint(w, &self.cfg.to_text(), p)
    }

    /// Rebuilds the model described by a checkpoint header and loads its values.
    pub fn load<R: std::io::Read, T: Real>(r: &mut R) -> Result<(Self, ModelParams<T>)> {
        let (header, records) = checkpoint::read_checkpoint(r)?;
        let cfg = ModelConfig::from_text(&header)?;
        let (model, mut params) = Self::new(&cfg, 0)?;
        checkpoint::apply_records(&mut params, &records)?;
        Ok((model, params))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn head(&self) -> MaskHead {
        self.cfg.head
    }

    pub fn psm_blocks(&self) -> &[PsmBlock] {
        &self.psm
    }

    fn check_input<T: Real>(&self, x: &FeatureTensor<T>) -> Result<Vec<usize>> {
        if x.channels() != self.cfg.input_channels {
            return Err(Error::shape(
                "model input",
                format!(
                    "expected {} channels, got {}",
                    self.cfg.input_channels,
                    x.channels()
                ),
            ));
        }
        let chain = self.cfg.freq_chain(x.freq());
        if x.freq() == 0 || chain.iter().any(|&f| f == 0) {
            return Err(Error::shape("model input", "empty frequency axis"));
        }
        Ok(chain)
    }

    /// Layer-by-layer evaluation over whole tensors.
    ///
    /// In [`Mode::Train`] batch norm uses batch statistics and updates the
    /// running averages. With `record` the returned trace feeds [`Mpcrn::backward`].
    /// Every stage is checked for non-finite values; the error names the first offender.
    pub fn forward_layers<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &FeatureTensor<T>,
        mode: Mode,
        record: bool,
    ) -> Result<(FeatureTensor<T>, Option<Trace<T>>)> {
        let chain = self.check_input(x)?;
        let mut h = x.clone();
        let mut enc_tr = Vec::new();
        for (i, blk) in self.enc.iter().enumerate() {
            let y = blk.conv.forward(p, &h)?;
            check_finite(&format!("enc{i}.conv"), y.as_slice())?;
            let (z, bn) = batch_norm(&blk.bn, p, &y, mode)?;
            check_finite(&format!("enc{i}.bn"), z.as_slice())?;
            let out = blk.act.forward(p, &z)?;
            if record {
                enc_tr.push(BlockTrace {
                    input: h,
                    bn,
                    act_in: Some(z),
                });
            }
            h = out;
        }
        let mut psm_tr = Vec::new();
        for (i, blk) in self.psm.iter().enumerate() {
            let (out, tr) = blk.forward(p, &h, mode, record, &format!("psm{i}"))?;
            psm_tr.extend(tr);
            h = out;
        }
        let mut dec_tr = Vec::new();
        for (i, blk) in self.dec.iter().enumerate() {
            let target = chain[chain.len() - 2 - i];
            let y = blk.tconv.forward(p, &h, target)?;
            check_finite(&format!("dec{i}.tconv"), y.as_slice())?;
            let (out, bn, act_in) = match &blk.post {
                Some((bn, act)) => {
                    let (z, cache) = batch_norm(bn, p, &y, mode)?;
                    check_finite(&format!("dec{i}.bn"), z.as_slice())?;
                    (act.forward(p, &z)?, cache, Some(z))
                }
                None => (y, None, None),
            };
            if record {
                dec_tr.push(BlockTrace {
                    input: h,
                    bn,
                    act_in,
                });
            }
            h = out;
        }
        let pre = h;
        let mut out = pre.clone();
        for b in 0..out.batch() {
            for t in 0..out.time() {
                self.activate_head(out.frame_mut(b, t), pre.freq());
            }
        }
        let trace = record.then(|| Trace {
            enc: enc_tr,
            psm: psm_tr,
            dec: dec_tr,
            pre,
            out: out.clone(),
        });
        Ok((out, trace))
    }

    /// Training-mode forward pass that records activations.
    pub fn forward_train<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &FeatureTensor<T>,
    ) -> Result<(FeatureTensor<T>, Trace<T>)> {
        let (out, trace) = self.forward_layers(p, x, Mode::Train, true)?;
        let trace = trace.ok_or_else(|| Error::Usage("forward pass was not recorded".into()))?;
        Ok((out, trace))
    }

    /// Accumulates parameter gradients for `grad_out` (gradient of the
    /// activated head output) and returns the input gradient.
    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        trace: &Trace<T>,
        grad_out: &FeatureTensor<T>,
    ) -> Result<FeatureTensor<T>> {
        grad_out.expect_shape("model backward", trace.out.shape())?;
        if trace.enc.len() != self.enc.len() || trace.dec.len() != self.dec.len() {
            return Err(Error::Usage("trace does not belong to this model".into()));
        }
        let mut g = grad_out.clone();
        let freq = g.freq();
        for b in 0..g.batch() {
            for t in 0..g.time() {
                self.head_backward(trace.pre.frame(b, t), trace.out.frame(b, t), g.frame_mut(b, t), freq);
            }
        }
        for (blk, tr) in self.dec.iter().zip(&trace.dec).rev() {
            if let (Some((bn, act)), Some(act_in)) = (&blk.post, &tr.act_in) {
                g = act.backward(p, act_in, &g)?;
                g = bn.backward(p, require_bn(&tr.bn)?, &g)?;
            }
            g = blk.tconv.backward(p, &tr.input, &g)?;
        }
        for (blk, tr) in self.psm.iter().zip(&trace.psm).rev() {
            g = blk.backward(p, tr, &g)?;
        }
        for (blk, tr) in self.enc.iter().zip(&trace.enc).rev() {
            let act_in = tr
                .act_in
                .as_ref()
                .ok_or_else(|| Error::Usage("incomplete trace".into()))?;
            g = blk.act.backward(p, act_in, &g)?;
            g = blk.bn.backward(p, require_bn(&tr.bn)?, &g)?;
            g = blk.conv.backward(p, &tr.input, &g)?;
        }
        p.mark_grads_ready();
        Ok(g)
    }

    fn activate_head<T: Real>(&self, frame: &mut [T], freq: usize) {
        if self.cfg.head == MaskHead::Cartesian {
            return;
        }
        let (mag, phase) = frame.split_at_mut(freq);
        let ml: T = T::from_f64_lossy(MAG_LOGIT_LIMIT);
        let pl: T = T::from_f64_lossy(PHASE_LOGIT_LIMIT);
        for v in mag {
            *v = sigmoid(v.max(-ml).min(ml));
        }
        for v in phase {
            *v = v.max(-pl).min(pl).tanh();
        }
    }

    fn head_backward<T: Real>(&self, pre: &[T], out: &[T], g: &mut [T], freq: usize) {
        if self.cfg.head == MaskHead::Cartesian {
            return;
        }
        let ml: T = T::from_f64_lossy(MAG_LOGIT_LIMIT);
        let pl: T = T::from_f64_lossy(PHASE_LOGIT_LIMIT);
        for i in 0..g.len() {
            let (limit, deriv) = if i < freq {
                (ml, out[i] * (T::one() - out[i]))
            } else {
                (pl, T::one() - out[i] * out[i])
            };
            g[i] = if pre[i].abs() < limit { g[i] * deriv } else { T::zero() };
        }
    }

    pub fn new_state<T: Real>(&self, bins: usize) -> Result<NetState<T>> {
        let chain = self.cfg.freq_chain(bins);
        if bins == 0 || chain.iter().any(|&f| f == 0) {
            return Err(Error::invalid("frequency axis too small for the encoder"));
        }
        let kt = self.cfg.kernel_t;
        let mut enc_hist = Vec::new();
        let mut in_ch = self.cfg.input_channels;
        for (i, &out) in self.cfg.enc_channels.iter().enumerate() {
            enc_hist.push(vec![vec![T::zero(); in_ch * chain[i]]; kt - 1]);
            in_ch = out;
        }
        let f_mid = *chain.last().unwrap_or(&bins);
        let psm_h = self
            .cfg
            .psm_hidden
            .iter()
            .map(|&h| GruState::zeros(f_mid, h))
            .collect();
        let mut dec_hist = Vec::new();
        for (i, &out) in self.cfg.dec_channels.iter().enumerate() {
            let f_in = chain[chain.len() - 1 - i];
            dec_hist.push(vec![vec![T::zero(); in_ch * f_in]; kt - 1]);
            in_ch = out;
        }
        Ok(NetState {
            bins,
            enc_hist,
            psm_h,
            dec_hist,
            frames: 0,
        })
    }

    /// Advances `state` by one `input_channels x bins` frame and writes the
    /// activated `head_channels x bins` output.
    pub fn step_frame<T: Real>(
        &self,
        p: &ModelParams<T>,
        state: &mut NetState<T>,
        input: &[T],
        out: &mut [T],
        s: &mut StepScratch<T>,
    ) -> Result<()> {
        let bins = state.bins;
        let chain = self.cfg.freq_chain(bins);
        if input.len() != self.cfg.input_channels * bins || out.len() != self.cfg.head.channels() * bins {
            return Err(Error::shape(
                "step_frame",
                format!("frame of {} values / output of {} values for {bins} bins", input.len(), out.len()),
            ));
        }
        s.a.clear();
        s.a.extend_from_slice(input);
        for (i, blk) in self.enc.iter().enumerate() {
            let f_in = chain[i];
            let f_out = chain[i + 1];
            s.b.resize(blk.conv.spec.out_ch * f_out, T::zero());
            {
                let hist = &state.enc_hist[i];
                let mut frames: Vec<Option<&[T]>> = hist.iter().map(|v| Some(&v[..])).collect();
                frames.push(Some(&s.a[..]));
                blk.conv.forward_frame(p, &frames, f_in, &mut s.b, &mut s.col);
            }
            push_oldest_first(&mut state.enc_hist[i], &s.a);
            blk.bn.apply_frame_eval(p, &mut s.b, f_out);
            blk.act.apply_frame(p, &mut s.b, f_out);
            std::mem::swap(&mut s.a, &mut s.b);
        }
        let f_mid = *chain.last().unwrap_or(&bins);
        for (blk, h) in self.psm.iter().zip(state.psm_h.iter_mut()) {
            s.b.resize(blk.channels * f_mid, T::zero());
            blk.step_frame(p, &s.a, f_mid, h, &mut s.psm, &mut s.b);
            std::mem::swap(&mut s.a, &mut s.b);
        }
        for (i, blk) in self.dec.iter().enumerate() {
            let f_in = chain[chain.len() - 1 - i];
            let f_out = chain[chain.len() - 2 - i];
            s.b.resize(blk.tconv.spec.out_ch * f_out, T::zero());
            {
                let hist = &state.dec_hist[i];
                let mut frames: Vec<Option<&[T]>> = vec![Some(&s.a[..])];
                frames.extend(hist.iter().map(|v| Some(&v[..])));
                blk.tconv.forward_frame(p, &frames, f_in, f_out, &mut s.b, &mut s.col)?;
            }
            push_newest_first(&mut state.dec_hist[i], &s.a);
            if let Some((bn, act)) = &blk.post {
                bn.apply_frame_eval(p, &mut s.b, f_out);
                act.apply_frame(p, &mut s.b, f_out);
            }
            std::mem::swap(&mut s.a, &mut s.b);
        }
        self.activate_head(&mut s.a, bins);
        out.copy_from_slice(&s.a);
        state.frames += 1;
        Ok(())
    }

    /// Eval-mode forward pass, one frame at a time with fresh state per batch item.
    pub fn forward_eval<T: Real>(&self, p: &ModelParams<T>, x: &FeatureTensor<T>) -> Result<FeatureTensor<T>> {
        self.check_input(x)?;
        let [batch, _, time, freq] = x.shape();
        let ch = self.cfg.head.channels();
        let mut y = FeatureTensor::zeros(batch, ch, time, freq);
        let mut scratch = StepScratch::default();
        for b in 0..batch {
            let mut state = self.new_state(freq)?;
            for t in 0..time {
                self.step_frame(p, &mut state, x.frame(b, t), y.frame_mut(b, t), &mut scratch)?;
            }
        }
        Ok(y)
    }

    /// Total trainable scalars of this architecture.
    pub fn count_params(&self) -> usize {
        count_params(&self.cfg)
    }
}

fn batch_norm<T: Real>(
    bn: &BatchNorm2d,
    p: &mut ModelParams<T>,
    y: &FeatureTensor<T>,
    mode: Mode,
) -> Result<(FeatureTensor<T>, Option<BnCache<T>>)> {
    match mode {
        Mode::Train => {
            let (z, c) = bn.forward_train(p, y)?;
            Ok((z, Some(c)))
        }
        Mode::Eval => Ok((bn.forward_eval(p, y)?, None)),
    }
}

fn require_bn<T>(c: &Option<BnCache<T>>) -> Result<&BnCache<T>> {
    c.as_ref()
        .ok_or_else(|| Error::Usage("backward needs a training-mode forward pass".into()))
}

fn push_oldest_first<T: Real>(hist: &mut [Vec<T>], frame: &[T]) {
    if hist.is_empty() {
        return;
    }
    hist.rotate_left(1);
    if let Some(last) = hist.last_mut() {
        last.copy_from_slice(frame);
    }
}

fn push_newest_first<T: Real>(hist: &mut [Vec<T>], frame: &[T]) {
    if hist.is_empty() {
        return;
    }
    hist.rotate_right(1);
    hist[0].copy_from_slice(frame);
}

/// Exact number of trainable scalars.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let taps = cfg.kernel_f * cfg.kernel_t;
    let mut total = 0;
    let mut in_ch = cfg.input_channels;
    for &out in &cfg.enc_channels {
        total += in_ch * out * taps + out + 2 * out + out;
        in_ch = out;
    }
    for &h in &cfg.psm_hidden {
        total += PsmBlock::num_params(in_ch, h);
    }
    let n = cfg.dec_channels.len();
    for (i, &out) in cfg.dec_channels.iter().enumerate() {
        total += in_ch * out * taps + out;
        if i + 1 < n {
            total += 3 * out;
        }
        in_ch = out;
    }
    total
}

/// Multiply-accumulates per frame for convolutions and recurrent layers.
///
/// Transposed convolutions are counted per input element scattered through
/// the kernel; normalization and activations are not counted.
pub fn count_macs(cfg: &ModelConfig, bins: usize) -> u64 {
    let chain = cfg.freq_chain(bins);
    let taps = (cfg.kernel_f * cfg.kernel_t) as u64;
    let mut total = 0u64;
    let mut in_ch = cfg.input_channels as u64;
    for (i, &out) in cfg.enc_channels.iter().enumerate() {
        total += chain[i + 1] as u64 * out as u64 * in_ch * taps;
        in_ch = out as u64;
    }
    let f_mid = *chain.last().unwrap_or(&bins);
    for &h in &cfg.psm_hidden {
        total += PsmBlock::macs_per_frame(in_ch as usize, h, f_mid);
    }
    for (i, &out) in cfg.dec_channels.iter().enumerate() {
        let f_in = chain[chain.len() - 1 - i] as u64;
        total += f_in * in_ch * out as u64 * taps;
        in_ch = out as u64;
    }
    total
}

/// Builds the `(batch, 2, frames, bins)` network input from noisy spectra.
pub fn spectra_to_input<T: Real>(specs: &[&ComplexSpectrogram]) -> Result<FeatureTensor<T>> {
    let first = specs.first().ok_or_else(|| Error::invalid("no spectra"))?;
    let (frames, bins) = first.real.dims();
    let mut x = FeatureTensor::zeros(specs.len(), 2, frames, bins);
    for (b, s) in specs.iter().enumerate() {
        if s.real.dims() != (frames, bins) {
            return Err(Error::shape("model input", "spectra in a batch must share a shape"));
        }
        for t in 0..frames {
            let frame = x.frame_mut(b, t);
            for (dst, &v) in frame[..bins].iter_mut().zip(s.real.row(t)) {
                *dst = T::from_f64_lossy(v);
            }
            for (dst, &v) in frame[bins..].iter_mut().zip(s.imag.row(t)) {
                *dst = T::from_f64_lossy(v);
            }
        }
    }
    Ok(x)
}

fn plane<T: Real>(y: &FeatureTensor<T>, b: usize, c: usize) -> Matrix {
    let (time, freq) = (y.time(), y.freq());
    let mut m = Matrix::zeros(time, freq);
    for t in 0..time {
        let src = &y.frame(b, t)[c * freq..(c + 1) * freq];
        for (d, s) in m.row_mut(t).iter_mut().zip(src) {
            *d = s.to_f64_lossy();
        }
    }
    m
}

fn set_plane<T: Real>(y: &mut FeatureTensor<T>, b: usize, c: usize, m: &Matrix) {
    let freq = y.freq();
    for t in 0..y.time() {
        let dst = &mut y.frame_mut(b, t)[c * freq..(c + 1) * freq];
        for (d, &s) in dst.iter_mut().zip(m.row(t)) {
            *d = T::from_f64_lossy(s);
        }
    }
}

/// Reads batch item `b` of a polar-head output.
pub fn mask_triple<T: Real>(y: &FeatureTensor<T>, b: usize) -> Result<MaskTriple> {
    if y.channels() != 3 || b >= y.batch() {
        return Err(Error::shape("mask head", format!("cannot read item {b} of {:?} as a mask triple", y.shape())));
    }
    Ok(MaskTriple {
        mag_mask: plane(y, b, 0),
        cirm_real: plane(y, b, 1),
        cirm_imag: plane(y, b, 2),
    })
}

/// Reads batch item `b` of a Cartesian-head output.
pub fn cartesian_mask<T: Real>(y: &FeatureTensor<T>, b: usize) -> Result<CartesianMask> {
    if y.channels() != 2 || b >= y.batch() {
        return Err(Error::shape("mask head", format!("cannot read item {b} of {:?} as a complex mask", y.shape())));
    }
    Ok(CartesianMask {
        real: plane(y, b, 0),
        imag: plane(y, b, 1),
    })
}

/// Writes mask-plane gradients of item `b` back into a head-shaped tensor.
pub fn write_mask_grad<T: Real>(g: &mut FeatureTensor<T>, b: usize, planes: &[&Matrix]) -> Result<()> {
    if planes.len() != g.channels() {
        return Err(Error::shape("mask gradient", format!("{} planes for {} channels", planes.len(), g.channels())));
    }
    for (c, m) in planes.iter().enumerate() {
        if m.dims() != (g.time(), g.freq()) {
            return Err(Error::shape("mask gradient", "plane size differs from the head output"));
        }
        set_plane(g, b, c, m);
    }
    Ok(())
}
