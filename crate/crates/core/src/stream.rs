//! Offline and frame-streaming enhancement pipelines.
//!
//! Streaming consumes `hop`-sample chunks after a `win_len - hop` sample
//! prime. Each analysis frame emits the `hop` output samples it completes, so
//! output sample `n` depends only on input samples up to `n + win_len - 1`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{self, ComplexSpectrogram, FrameAnalyzer, FrameSynthesizer, StftConfig, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::model::{self, MaskHead, ModelConfig, Mpcrn, NetState, StepScratch};
use crate::nn::ModelParams;
use crate::recon::{self, ReconstructionMode};

/// Network plus reconstruction choice. Without a network every bin gets the identity mask.
#[derive(Debug, Clone)]
pub struct Enhancer {
    net: Option<(Mpcrn, ModelParams<f32>)>,
    stft: StftConfig,
    recon: ReconstructionMode,
}

impl Enhancer {
    pub fn new(model: Mpcrn, params: ModelParams<f32>, recon: ReconstructionMode) -> Result<Self> {
        let expected = if recon.is_polar() {
            MaskHead::Polar
        } else {
            MaskHead::Cartesian
        };
        if model.head() != expected {
            return Err(Error::invalid(format!(
                "{recon} reconstruction needs a {} mask head, model has {}",
                expected.as_str(),
                model.head().as_str()
            )));
        }
        Ok(Self {
            net: Some((model, params)),
            stft: StftConfig::default(),
            recon,
        })
    }

    /// Pass-through pipeline: analysis, identity mask, synthesis.
    pub fn identity() -> Self {
        Self {
            net: None,
            stft: StftConfig::default(),
            recon: ReconstructionMode::Polar,
        }
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft
    }

    pub fn recon_mode(&self) -> ReconstructionMode {
        self.recon
    }

    pub fn model(&self) -> Option<&Mpcrn> {
        self.net.as_ref().map(|(m, _)| m)
    }

    /// Reconstructs bins of one frame from the head output `masks` (`channels x bins`).
    fn apply_masks(&self, masks: Option<&[f32]>, xr: &[f64], xi: &[f64], out_r: &mut [f64], out_i: &mut [f64]) {
        let bins = xr.len();
        for k in 0..bins {
            let (r, i) = match masks {
                None => recon::polar_bin(1.0, 1.0, 0.0, xr[k], xi[k]),
                Some(m) if self.recon.is_polar() => recon::polar_bin(
                    m[k] as f64,
                    m[bins + k] as f64,
                    m[2 * bins + k] as f64,
                    xr[k],
                    xi[k],
                ),
                Some(m) => recon::cartesian_bin(self.recon, m[k] as f64, m[bins + k] as f64, xr[k], xi[k]),
            };
            out_r[k] = r;
            out_i[k] = i;
        }
    }

    /// Enhances a whole noisy spectrogram.
    pub fn enhance_spectrum(&self, x: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        let mut out = ComplexSpectrogram::zeros(x.frames(), x.config);
        let Some((model, params)) = &self.net else {
            for t in 0..x.frames() {
                self.apply_masks(None, x.real.row(t), x.imag.row(t), out.real.row_mut(t), out.imag.row_mut(t));
            }
            return Ok(out);
        };
        let input = model::spectra_to_input::<f32>(&[x])?;
        let y = model.forward_eval(params, &input)?;
        for t in 0..x.frames() {
            let (r, i) = (out.real.row_mut(t), out.imag.row_mut(t));
            self.apply_masks(Some(y.frame(0, t)), x.real.row(t), x.imag.row(t), r, i);
        }
        Ok(out)
    }

    /// Whole-signal enhancement; the output has the input's length.
    ///
    /// The signal is zero-padded so that every input sample is covered by the
    /// same frames the streaming path would have produced for it.
    pub fn enhance_offline(&self, w: &Waveform) -> Result<Waveform> {
        if w.is_empty() {
            return Err(Error::invalid("empty waveform"));
        }
        let cfg = self.stft;
        let last_frame = (w.len() - 1) / cfg.hop;
        let mut padded = w.samples.clone();
        padded.resize(last_frame * cfg.hop + cfg.win_len, 0.0);
        let x = dsp::stft(&Waveform::new(padded, w.sample_rate)?, &cfg)?;
        let y = self.enhance_spectrum(&x)?;
        let mut out = dsp::istft(&y)?;
        out.samples.truncate(w.len());
        out.sample_rate = w.sample_rate;
        Ok(out)
    }

    pub fn new_stream(&self) -> Result<StreamState> {
        let cfg = self.stft;
        let net = match &self.net {
            Some((m, _)) => Some(m.new_state::<f32>(cfg.bins())?),
            None => None,
        };
        let bins = cfg.bins();
        let head = self.net.as_ref().map_or(3, |(m, _)| m.head().channels());
        Ok(StreamState {
            analyzer: FrameAnalyzer::new(cfg)?,
            synth: FrameSynthesizer::new(cfg)?,
            net,
            scratch: StepScratch::default(),
            input: Vec::with_capacity(cfg.win_len),
            ola: vec![0.0; cfg.win_len],
            norm: vec![0.0; cfg.win_len],
            re: vec![0.0; bins],
            im: vec![0.0; bins],
            feat: vec![0.0; 2 * bins],
            masks: vec![0.0; head * bins],
            frame: vec![0.0; cfg.win_len],
            pending: Vec::new(),
            received: 0,
            emitted: 0,
            frames: 0,
        })
    }

    /// Loads the first `win_len - hop` samples of a stream.
    pub fn prime(&self, st: &mut StreamState, samples: &[f64]) -> Result<()> {
        let need = self.stft.win_len - self.stft.hop;
        if st.frames > 0 || !st.input.is_empty() {
            return Err(Error::Usage("stream already primed".into()));
        }
        if samples.len() != need {
            return Err(Error::invalid(format!("priming needs {need} samples, got {}", samples.len())));
        }
        st.input.extend_from_slice(samples);
        st.received += samples.len() as u64;
        Ok(())
    }

    /// Consumes exactly `hop` samples and returns the `hop` samples the new frame completes.
    pub fn process_frame(&self, st: &mut StreamState, chunk: &[f64]) -> Result<Vec<f64>> {
        let cfg = self.stft;
        if chunk.len() != cfg.hop {
            return Err(Error::invalid(format!("expected {} samples, got {}", cfg.hop, chunk.len())));
        }
        if st.input.len() != cfg.win_len - cfg.hop {
            return Err(Error::Usage("stream must be primed before processing frames".into()));
        }
        st.input.extend_from_slice(chunk);
        st.received += chunk.len() as u64;
        st.analyzer.analyze(&st.input, &mut st.re, &mut st.im);
        st.input.drain(..cfg.hop);

        let bins = cfg.bins();
        let mut spec_r = vec![0.0; bins];
        let mut spec_i = vec![0.0; bins];
        match (&self.net, st.net.as_mut()) {
            (Some((model, params)), Some(net)) => {
                for k in 0..bins {
                    st.feat[k] = st.re[k] as f32;
                    st.feat[bins + k] = st.im[k] as f32;
                }
                model.step_frame(params, net, &st.feat, &mut st.masks, &mut st.scratch)?;
                self.apply_masks(Some(&st.masks), &st.re, &st.im, &mut spec_r, &mut spec_i);
            }
            _ => self.apply_masks(None, &st.re, &st.im, &mut spec_r, &mut spec_i),
        }

        st.synth.synthesize(&spec_r, &spec_i, &mut st.frame);
        for (o, v) in st.ola.iter_mut().zip(&st.frame) {
            *o += v;
        }
        for (n, w) in st.norm.iter_mut().zip(st.synth.window()) {
            *n += w * w;
        }
        let out: Vec<f64> = st.ola[..cfg.hop]
            .iter()
            .zip(&st.norm[..cfg.hop])
            .map(|(&o, &d)| if d > dsp::PHASE_EPS { o / d } else { o })
            .collect();
        st.ola.rotate_left(cfg.hop);
        st.norm.rotate_left(cfg.hop);
        let tail = cfg.win_len - cfg.hop;
        st.ola[tail..].iter_mut().for_each(|v| *v = 0.0);
        st.norm[tail..].iter_mut().for_each(|v| *v = 0.0);
        st.frames += 1;
        st.emitted += cfg.hop as u64;
        Ok(out)
    }

    /// Buffers arbitrary-length input and returns whatever output became available.
    pub fn push(&self, st: &mut StreamState, samples: &[f64]) -> Result<Vec<f64>> {
        let cfg = self.stft;
        let mut out = Vec::new();
        st.pending.extend_from_slice(samples);
        let prime = cfg.win_len - cfg.hop;
        if st.frames == 0 && st.input.is_empty() {
            if st.pending.len() < prime {
                return Ok(out);
            }
            let head: Vec<f64> = st.pending.drain(..prime).collect();
            self.prime(st, &head)?;
        }
        while st.pending.len() >= cfg.hop {
            let chunk: Vec<f64> = st.pending.drain(..cfg.hop).collect();
            out.extend(self.process_frame(st, &chunk)?);
        }
        Ok(out)
    }

    /// Zero-pads the stream until every received sample has been emitted.
    pub fn flush(&self, st: &mut StreamState) -> Result<Vec<f64>> {
        let total = st.received + st.pending.len() as u64;
        if total == 0 {
            return Ok(Vec::new());
        }
        let (hop, win) = (self.stft.hop as u64, self.stft.win_len as u64);
        let before = st.emitted;
        let required = (total - 1) / hop * hop + win;
        let mut out = self.push(st, &vec![0.0; (required - total) as usize])?;
        out.truncate((total - before) as usize);
        Ok(out)
    }

    /// Runs a whole signal through a fresh stream in `hop`-sized chunks.
    pub fn enhance_streaming(&self, w: &Waveform) -> Result<Waveform> {
        let mut st = self.new_stream()?;
        let mut out = self.push(&mut st, &w.samples)?;
        out.extend(self.flush(&mut st)?);
        Waveform::new(out, w.sample_rate)
    }
}

/// Per-stream state: analysis buffer, network history and overlap-add tail.
pub struct StreamState {
    analyzer: FrameAnalyzer,
    synth: FrameSynthesizer,
    net: Option<NetState<f32>>,
    scratch: StepScratch<f32>,
    input: Vec<f64>,
    ola: Vec<f64>,
    norm: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
    feat: Vec<f32>,
    masks: Vec<f32>,
    frame: Vec<f64>,
    pending: Vec<f64>,
    received: u64,
    emitted: u64,
    frames: u64,
}

impl StreamState {
    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    /// Scalars of persistent state (network history plus synthesis tail).
    pub fn footprint(&self) -> usize {
        self.net.as_ref().map_or(0, |n| n.footprint()) + self.ola.len() + self.norm.len() + self.input.capacity()
    }

    /// Network history, if a network is attached.
    pub fn net_state(&self) -> Option<&NetState<f32>> {
        self.net.as_ref()
    }

    pub fn reset(&mut self) {
        if let Some(n) = self.net.as_mut() {
            n.reset();
        }
        self.input.clear();
        self.pending.clear();
        self.ola.iter_mut().for_each(|v| *v = 0.0);
        self.norm.iter_mut().for_each(|v| *v = 0.0);
        self.received = 0;
        self.emitted = 0;
        self.frames = 0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtfReport {
    pub audio_seconds: f64,
    /// Wall-clock processing time of each run.
    pub run_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub rtf: f64,
}

/// Streams `seconds` of noise through a freshly initialized model `runs` times
/// on the calling thread and reports the median real-time factor.
pub fn benchmark_rtf(cfg: &ModelConfig, seconds: f64, runs: usize, seed: u64) -> Result<RtfReport> {
    if !(seconds > 0.0) || runs == 0 {
        return Err(Error::invalid("benchmark needs a positive duration and at least one run"));
    }
    let (model, params) = Mpcrn::new::<f32>(cfg, seed)?;
    let recon = match cfg.head {
        MaskHead::Polar => ReconstructionMode::Polar,
        MaskHead::Cartesian => ReconstructionMode::C,
    };
    let enhancer = Enhancer::new(model, params, recon)?;
    let n = ((seconds * SAMPLE_RATE as f64).round() as usize).max(StftConfig::default().win_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
    let cfg_stft = *enhancer.stft_config();
    let prime = cfg_stft.win_len - cfg_stft.hop;
    let mut run_seconds = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut st = enhancer.new_stream()?;
        let start = Instant::now();
        enhancer.prime(&mut st, &samples[..prime])?;
        for chunk in samples[prime..].chunks_exact(cfg_stft.hop) {
            std::hint::black_box(enhancer.process_frame(&mut st, chunk)?);
        }
        run_seconds.push(start.elapsed().as_secs_f64());
    }
    let mut sorted = run_seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let median_seconds = sorted[sorted.len() / 2];
    let audio_seconds = n as f64 / SAMPLE_RATE as f64;
    Ok(RtfReport {
        audio_seconds,
        run_seconds,
        median_seconds,
        rtf: median_seconds / audio_seconds,
    })
}
