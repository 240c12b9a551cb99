//! Parallel sequence modeling block.
//!
//! A temporal branch runs a GRU along time independently for every frequency
//! position; a spectral branch runs a direction-summed BiGRU along frequency
//! within each frame. Channels are the per-step features in both branches.
//! The two branch outputs are added and projected back to the input width by
//! a pointwise convolution with batch norm and PReLU.

use crate::error::{Error, Result};
use crate::nn::activation::Prelu;
use crate::nn::gru::{BiGruCache, GruCache, GruScratch};
use crate::nn::norm::{BnCache, LnCache};
use crate::nn::params::ParamBuilder;
use crate::nn::{
    check_finite, BatchNorm2d, BiGru, Conv2dCausal, ConvSpec, FeatureTensor, Gru, GruState,
    LayerNorm, Mode, ModelParams, Real,
};

/// `(b, c, t, f)` to lanes `(b, f)` of `t` steps, each `c` wide.
pub(crate) fn to_time_lanes<T: Real>(x: &FeatureTensor<T>) -> Vec<T> {
    let [batch, ch, time, freq] = x.shape();
    let mut out = vec![T::zero(); x.as_slice().len()];
    for b in 0..batch {
        for t in 0..time {
            let frame = x.frame(b, t);
            for c in 0..ch {
                for f in 0..freq {
                    out[((b * freq + f) * time + t) * ch + c] = frame[c * freq + f];
                }
            }
        }
    }
    out
}

pub(crate) fn from_time_lanes<T: Real>(v: &[T], shape: [usize; 4]) -> FeatureTensor<T> {
    let [batch, ch, time, freq] = shape;
    let mut x = FeatureTensor::zeros(batch, ch, time, freq);
    for b in 0..batch {
        for t in 0..time {
            let frame = x.frame_mut(b, t);
            for c in 0..ch {
                for f in 0..freq {
                    frame[c * freq + f] = v[((b * freq + f) * time + t) * ch + c];
                }
            }
        }
    }
    x
}

/// Transposes one `rows x cols` block.
#[inline]
pub(crate) fn transpose<T: Real>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// `(b, c, t, f)` to lanes `(b, t)` of `f` steps, each `c` wide.
pub(crate) fn to_freq_lanes<T: Real>(x: &FeatureTensor<T>) -> Vec<T> {
    let [batch, ch, time, freq] = x.shape();
    let mut out = vec![T::zero(); x.as_slice().len()];
    let n = ch * freq;
    for b in 0..batch {
        for t in 0..time {
            let lane = b * time + t;
            transpose(x.frame(b, t), ch, freq, &mut out[lane * n..(lane + 1) * n]);
        }
    }
    out
}

pub(crate) fn from_freq_lanes<T: Real>(v: &[T], shape: [usize; 4]) -> FeatureTensor<T> {
    let [batch, ch, time, freq] = shape;
    let mut x = FeatureTensor::zeros(batch, ch, time, freq);
    let n = ch * freq;
    for b in 0..batch {
        for t in 0..time {
            let lane = b * time + t;
            transpose(&v[lane * n..(lane + 1) * n], freq, ch, x.frame_mut(b, t));
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct PsmBlock {
    pub channels: usize,
    pub hidden: usize,
    pub temporal: Gru,
    pub ln_t: LayerNorm,
    pub act_t: Prelu,
    pub spectral: BiGru,
    pub ln_s: LayerNorm,
    pub act_s: Prelu,
    pub fuse: Conv2dCausal,
    pub bn: BatchNorm2d,
    pub act: Prelu,
}

#[derive(Debug, Clone)]
pub(crate) struct PsmTrace<T> {
    input: FeatureTensor<T>,
    xt: Vec<T>,
    gru: GruCache<T>,
    ln_t: LnCache<T>,
    act_t_in: FeatureTensor<T>,
    xs: Vec<T>,
    bigru: BiGruCache<T>,
    ln_s: LnCache<T>,
    act_s_in: FeatureTensor<T>,
    fused: FeatureTensor<T>,
    bn: Option<BnCache<T>>,
    act_in: FeatureTensor<T>,
}

/// Reusable buffers for frame-at-a-time evaluation.
#[derive(Debug, Clone, Default)]
pub(crate) struct PsmScratch<T> {
    xt: Vec<T>,
    lanes: Vec<T>,
    temporal: Vec<T>,
    spectral: Vec<T>,
    col: Vec<T>,
    gru: GruScratch<T>,
}

impl PsmBlock {
    pub fn new<T: Real>(channels: usize, hidden: usize, b: &mut ParamBuilder<T>) -> Result<Self> {
        b.push_scope("temporal");
        b.push_scope("gru");
        let temporal = Gru::new(channels, hidden, b)?;
        b.pop_scope();
        b.push_scope("ln");
        let ln_t = LayerNorm::new(hidden, b)?;
        b.pop_scope();
        b.push_scope("act");
        let act_t = Prelu::new(hidden, b)?;
        b.pop_scope();
        b.pop_scope();

        b.push_scope("spectral");
        b.push_scope("bigru");
        let spectral = BiGru::new(channels, hidden, b)?;
        b.pop_scope();
        b.push_scope("ln");
        let ln_s = LayerNorm::new(hidden, b)?;
        b.pop_scope();
        b.push_scope("act");
        let act_s = Prelu::new(hidden, b)?;
        b.pop_scope();
        b.pop_scope();

        b.push_scope("fuse");
        b.push_scope("conv");
        let fuse = Conv2dCausal::new(ConvSpec::pointwise(hidden, channels), b)?;
        b.pop_scope();
        b.push_scope("bn");
        let bn = BatchNorm2d::new(channels, b)?;
        b.pop_scope();
        b.push_scope("act");
        let act = Prelu::new(channels, b)?;
        b.pop_scope();
        b.pop_scope();
        Ok(Self {
            channels,
            hidden,
            temporal,
            ln_t,
            act_t,
            spectral,
            ln_s,
            act_s,
            fuse,
            bn,
            act,
        })
    }

    pub fn num_params(channels: usize, hidden: usize) -> usize {
        let branch = 2 * hidden + hidden; // layer norm + PReLU
        Gru::num_params(channels, hidden)
            + 2 * Gru::num_params(channels, hidden)
            + 2 * branch
            + hidden * channels
            + channels
            + 3 * channels
    }

    /// Multiply-accumulates for one frame with `freq` positions.
    pub fn macs_per_frame(channels: usize, hidden: usize, freq: usize) -> u64 {
        let gru = 3 * hidden * (channels + hidden);
        (freq * (3 * gru + hidden * channels)) as u64
    }

    pub(crate) fn forward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &FeatureTensor<T>,
        mode: Mode,
        record: bool,
        name: &str,
    ) -> Result<(FeatureTensor<T>, Option<PsmTrace<T>>)> {
        if x.channels() != self.channels {
            return Err(Error::shape(
                name,
                format!("expected {} channels, got {}", self.channels, x.channels()),
            ));
        }
        let [batch, _, time, freq] = x.shape();
        let hshape = [batch, self.hidden, time, freq];

        let xt = to_time_lanes(x);
        let h0 = GruState::zeros(batch * freq, self.hidden);
        let (ht, _, gru_cache) = self.temporal.forward(p, &xt, batch * freq, time, &h0, record)?;
        let ht = from_time_lanes(&ht, hshape);
        check_finite(&format!("{name}.temporal.gru"), ht.as_slice())?;
        let (act_t_in, ln_t) = self.ln_t.forward(p, &ht)?;
        let mut branch_t = self.act_t.forward(p, &act_t_in)?;

        let xs = to_freq_lanes(x);
        let (hs, bigru_cache) = self.spectral.forward(p, &xs, batch * time, freq, record)?;
        let hs = from_freq_lanes(&hs, hshape);
        check_finite(&format!("{name}.spectral.bigru"), hs.as_slice())?;
        let (act_s_in, ln_s) = self.ln_s.forward(p, &hs)?;
        let branch_s = self.act_s.forward(p, &act_s_in)?;

        branch_t.add_assign(&branch_s);
        let fused = branch_t;
        let y = self.fuse.forward(p, &fused)?;
        let (act_in, bn_cache) = match mode {
            Mode::Train => {
                let (z, c) = self.bn.forward_train(p, &y)?;
                (z, Some(c))
            }
            Mode::Eval => (self.bn.forward_eval(p, &y)?, None),
        };
        check_finite(&format!("{name}.fuse"), act_in.as_slice())?;
        let out = self.act.forward(p, &act_in)?;
        let trace = match (record, gru_cache, bigru_cache) {
            (true, Some(gru), Some(bigru)) => Some(PsmTrace {
                input: x.clone(),
                xt,
                gru,
                ln_t,
                act_t_in,
                xs,
                bigru,
                ln_s,
                act_s_in,
                fused,
                bn: bn_cache,
                act_in,
            }),
            _ => None,
        };
        Ok((out, trace))
    }

    pub(crate) fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        trace: &PsmTrace<T>,
        grad_out: &FeatureTensor<T>,
    ) -> Result<FeatureTensor<T>> {
        let shape = trace.input.shape();
        let g = self.act.backward(p, &trace.act_in, grad_out)?;
        let bn = trace
            .bn
            .as_ref()
            .ok_or_else(|| Error::Usage("backward needs a training-mode forward pass".into()))?;
        let g = self.bn.backward(p, bn, &g)?;
        let g_fused = self.fuse.backward(p, &trace.fused, &g)?;

        let gt = self.act_t.backward(p, &trace.act_t_in, &g_fused)?;
        let gt = self.ln_t.backward(p, &trace.ln_t, &gt)?;
        let (dxt, _) = self
            .temporal
            .backward(p, &trace.xt, &trace.gru, &to_time_lanes(&gt))?;
        let mut dx = from_time_lanes(&dxt, shape);

        let gs = self.act_s.backward(p, &trace.act_s_in, &g_fused)?;
        let gs = self.ln_s.backward(p, &trace.ln_s, &gs)?;
        let dxs = self
            .spectral
            .backward(p, &trace.xs, &trace.bigru, &to_freq_lanes(&gs))?;
        dx.add_assign(&from_freq_lanes(&dxs, shape));
        Ok(dx)
    }

    /// Evaluates one `channels x freq` frame, advancing the temporal state.
    pub(crate) fn step_frame<T: Real>(
        &self,
        p: &ModelParams<T>,
        frame: &[T],
        freq: usize,
        state: &mut GruState<T>,
        s: &mut PsmScratch<T>,
        out: &mut [T],
    ) {
        let (c, h) = (self.channels, self.hidden);
        s.xt.resize(c * freq, T::zero());
        transpose(frame, c, freq, &mut s.xt);

        // temporal branch: one recurrence step per frequency lane
        s.temporal.resize(h * freq, T::zero());
        s.lanes.resize(h * freq, T::zero());
        for f in 0..freq {
            let hl = state.lane_mut(f);
            self.temporal.step(p, &s.xt[f * c..(f + 1) * c], hl, &mut s.gru);
            s.lanes[f * h..(f + 1) * h].copy_from_slice(hl);
        }
        transpose(&s.lanes, freq, h, &mut s.temporal);
        self.ln_t.apply_frame(p, &mut s.temporal, freq);
        self.act_t.apply_frame(p, &mut s.temporal, freq);

        // spectral branch: the whole frame is a single lane over frequency
        let (hs, _) = self
            .spectral
            .forward(p, &s.xt, 1, freq, false)
            .expect("spectral branch sizes are fixed by construction");
        s.spectral.resize(h * freq, T::zero());
        transpose(&hs, freq, h, &mut s.spectral);
        self.ln_s.apply_frame(p, &mut s.spectral, freq);
        self.act_s.apply_frame(p, &mut s.spectral, freq);

        for (a, b) in s.temporal.iter_mut().zip(&s.spectral) {
            *a += *b;
        }
        self.fuse
            .forward_frame(p, &[Some(&s.temporal[..])], freq, out, &mut s.col);
        self.bn.apply_frame_eval(p, out, freq);
        self.act.apply_frame(p, out, freq);
    }
}
