//! Waveform and spectrogram conversion.
//!
//! Framing is causal: frame `m` covers samples `[m * hop, m * hop + win_len)`
//! with no center padding. Synthesis uses weighted overlap-add with the
//! analysis window and per-sample normalization by the summed squared window,
//! so `istft(stft(x))` reproduces `x` wherever at least one frame covers it.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Sample rate every default pipeline runs at.
pub const SAMPLE_RATE: u32 = 16_000;

/// Magnitudes at or below this are treated as having no defined phase.
pub const PHASE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
    Rectangular,
}

impl WindowKind {
    /// Periodic window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hamming => (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 32 ms Hamming window, 8 ms hop, 512-point FFT at 16 kHz.
    fn default() -> Self {
        Self {
            win_len: 512,
            hop: 128,
            fft_size: 512,
            window: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.win_len == 0 || self.hop == 0 || self.fft_size == 0 {
            return Err(Error::invalid("STFT sizes must be positive"));
        }
        if self.win_len % self.hop != 0 {
            return Err(Error::invalid(format!(
                "hop {} does not divide window length {}",
                self.hop, self.win_len
            )));
        }
        if self.win_len > self.fft_size {
            return Err(Error::invalid(format!(
                "window length {} exceeds FFT size {}",
                self.win_len, self.fft_size
            )));
        }
        if self.fft_size % 2 != 0 {
            return Err(Error::invalid("FFT size must be even"));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win_len {
            0
        } else {
            (len - self.win_len) / self.hop + 1
        }
    }

    /// Length of the overlap-add synthesis output for `frames` frames.
    pub fn output_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.win_len
        }
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// One-sided complex STFT, `frames x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub real: Matrix,
    pub imag: Matrix,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, config: StftConfig) -> Self {
        let bins = config.bins();
        Self {
            real: Matrix::zeros(frames, bins),
            imag: Matrix::zeros(frames, bins),
            config,
        }
    }

    pub fn from_parts(real: Matrix, imag: Matrix, config: StftConfig) -> Result<Self> {
        let spec = Self { real, imag, config };
        spec.check()?;
        Ok(spec)
    }

    pub fn frames(&self) -> usize {
        self.real.rows()
    }

    pub fn bins(&self) -> usize {
        self.real.cols()
    }

    pub fn check(&self) -> Result<()> {
        if self.real.dims() != self.imag.dims() {
            return Err(Error::invalid(format!(
                "real plane {:?} and imaginary plane {:?} differ",
                self.real.dims(),
                self.imag.dims()
            )));
        }
        if self.real.cols() != self.config.bins() {
            return Err(Error::invalid(format!(
                "{} bins but FFT size {} implies {}",
                self.real.cols(),
                self.config.fft_size,
                self.config.bins()
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ComplexSpectrogram) -> bool {
        self.real.dims() == other.real.dims() && self.imag.dims() == other.imag.dims()
    }
}

/// Windowed single-frame forward transform shared by offline and streaming paths.
pub struct FrameAnalyzer {
    config: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl FrameAnalyzer {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        Ok(Self {
            config,
            window: config.window.coefficients(config.win_len),
            fft,
            buf: vec![Complex::new(0.0, 0.0); config.fft_size],
        })
    }

    /// Transforms `frame` (exactly `win_len` samples) into the one-sided spectrum.
    pub fn analyze(&mut self, frame: &[f64], re: &mut [f64], im: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.config.win_len);
        for (i, slot) in self.buf.iter_mut().enumerate() {
            *slot = if i < frame.len() {
                Complex::new(frame[i] * self.window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        self.fft.process(&mut self.buf);
        for k in 0..self.config.bins() {
            re[k] = self.buf[k].re;
            im[k] = self.buf[k].im;
        }
    }
}

/// Inverse transform of one frame followed by the synthesis window.
pub struct FrameSynthesizer {
    config: StftConfig,
    window: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl FrameSynthesizer {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let ifft = FftPlanner::new().plan_fft_inverse(config.fft_size);
        Ok(Self {
            config,
            window: config.window.coefficients(config.win_len),
            ifft,
            buf: vec![Complex::new(0.0, 0.0); config.fft_size],
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Writes the windowed time-domain frame (`win_len` samples) into `out`.
    ///
    /// The imaginary parts of the DC and Nyquist bins do not reach the real output.
    pub fn synthesize(&mut self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let n = self.config.fft_size;
        let half = n / 2;
        self.buf[0] = Complex::new(re[0], im[0]);
        for k in 1..half {
            self.buf[k] = Complex::new(re[k], im[k]);
            self.buf[n - k] = Complex::new(re[k], -im[k]);
        }
        self.buf[half] = Complex::new(re[half], im[half]);
        self.ifft.process(&mut self.buf);
        let scale = 1.0 / n as f64;
        for (i, o) in out.iter_mut().enumerate().take(self.config.win_len) {
            *o = self.buf[i].re * scale * self.window[i];
        }
    }
}

fn check_signal(w: &Waveform) -> Result<()> {
    if w.is_empty() {
        return Err(Error::invalid("empty waveform"));
    }
    if let Some(i) = w.samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample at index {i}")));
    }
    Ok(())
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    check_signal(w)?;
    cfg.validate()?;
    let frames = cfg.frame_count(w.len());
    if frames == 0 {
        return Err(Error::invalid(format!(
            "waveform of {} samples is shorter than one {}-sample window",
            w.len(),
            cfg.win_len
        )));
    }
    let mut analyzer = FrameAnalyzer::new(*cfg)?;
    let mut spec = ComplexSpectrogram::zeros(frames, *cfg);
    for m in 0..frames {
        let start = m * cfg.hop;
        let frame = &w.samples[start..start + cfg.win_len];
        let (re, im) = (spec.real.row_mut(m), spec.imag.row_mut(m));
        analyzer.analyze(frame, re, im);
    }
    Ok(spec)
}

/// Summed squared synthesis window at each output sample.
pub(crate) fn window_energy(cfg: &StftConfig, window: &[f64], frames: usize) -> Vec<f64> {
    let mut norm = vec![0.0; cfg.output_len(frames)];
    for m in 0..frames {
        let start = m * cfg.hop;
        for (i, w) in window.iter().enumerate() {
            norm[start + i] += w * w;
        }
    }
    norm
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    spec.check()?;
    let cfg = spec.config;
    let frames = spec.frames();
    let mut synth = FrameSynthesizer::new(cfg)?;
    let mut out = vec![0.0; cfg.output_len(frames)];
    let mut frame = vec![0.0; cfg.win_len];
    for m in 0..frames {
        synth.synthesize(spec.real.row(m), spec.imag.row(m), &mut frame);
        let start = m * cfg.hop;
        for (o, v) in out[start..start + cfg.win_len].iter_mut().zip(&frame) {
            *o += v;
        }
    }
    let norm = window_energy(&cfg, synth.window(), frames);
    for (o, d) in out.iter_mut().zip(&norm) {
        if *d > PHASE_EPS {
            *o /= d;
        }
    }
    Ok(Waveform {
        samples: out,
        sample_rate: SAMPLE_RATE,
    })
}

/// Polar decomposition of one complex value with the fixed zero-magnitude convention.
#[inline]
pub fn polar(re: f64, im: f64) -> (f64, f64, f64) {
    let mag = re.hypot(im);
    if mag <= PHASE_EPS {
        (mag, 1.0, 0.0)
    } else {
        (mag, re / mag, im / mag)
    }
}

/// Returns `(magnitude, cos_phase, sin_phase)` planes.
pub fn magnitude_phase(spec: &ComplexSpectrogram) -> (Matrix, Matrix, Matrix) {
    let (rows, cols) = spec.real.dims();
    let mut mag = Matrix::zeros(rows, cols);
    let mut cos = Matrix::zeros(rows, cols);
    let mut sin = Matrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let (m, c, s) = polar(spec.real.as_slice()[i], spec.imag.as_slice()[i]);
        mag.as_mut_slice()[i] = m;
        cos.as_mut_slice()[i] = c;
        sin.as_mut_slice()[i] = s;
    }
    (mag, cos, sin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            SAMPLE_RATE,
        )
        .unwrap()
    }

    /// Direct O(N^2) DFT of one windowed frame.
    fn brute_dft(frame: &[f64], window: &[f64], n_fft: usize) -> Vec<(f64, f64)> {
        (0..n_fft / 2 + 1)
            .map(|k| {
                let mut acc = (0.0, 0.0);
                for (n, (&x, &w)) in frame.iter().zip(window).enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                    acc.0 += x * w * ang.cos();
                    acc.1 += x * w * ang.sin();
                }
                acc
            })
            .collect()
    }

    #[test]
    fn three_seconds_gives_372_frames() {
        let cfg = StftConfig::default();
        let spec = stft(&random_wave(48_000, 1), &cfg).unwrap();
        assert_eq!(spec.frames(), 372);
        assert_eq!(spec.bins(), 257);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let w = Waveform::new(vec![0.0; 4096], SAMPLE_RATE).unwrap();
        let spec = stft(&w, &StftConfig::default()).unwrap();
        assert!(spec.real.as_slice().iter().all(|&v| v == 0.0));
        assert!(spec.imag.as_slice().iter().all(|&v| v == 0.0));
        let back = istft(&ComplexSpectrogram::zeros(10, StftConfig::default())).unwrap();
        assert!(back.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_brute_force_dft() {
        let cfg = StftConfig::default();
        let w = random_wave(1024, 7);
        let spec = stft(&w, &cfg).unwrap();
        let win = cfg.window.coefficients(cfg.win_len);
        for m in [0, 2, 4] {
            let frame = &w.samples[m * cfg.hop..m * cfg.hop + cfg.win_len];
            let oracle = brute_dft(frame, &win, cfg.fft_size);
            for (k, (re, im)) in oracle.iter().enumerate() {
                assert!((spec.real.get(m, k) - re).abs() < 1e-9);
                assert!((spec.imag.get(m, k) - im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bin_centred_cosine_concentrates_in_its_bin() {
        let cfg = StftConfig {
            window: WindowKind::Rectangular,
            ..StftConfig::default()
        };
        let k = 37;
        let f = k as f64 * 16_000.0 / 512.0;
        let samples = (0..2048)
            .map(|n| (2.0 * PI * f * n as f64 / 16_000.0).cos())
            .collect();
        let spec = stft(&Waveform::new(samples, SAMPLE_RATE).unwrap(), &cfg).unwrap();
        let (mag, _, _) = magnitude_phase(&spec);
        for m in 0..spec.frames() {
            let total: f64 = mag.row(m).iter().map(|v| v * v).sum();
            let peak = mag.get(m, k);
            assert!((peak - 256.0).abs() < 1e-8, "peak {peak}");
            assert!(peak * peak / total > 1.0 - 1e-12);
        }
    }

    #[test]
    fn round_trip_reconstructs_every_sample() {
        let cfg = StftConfig::default();
        let w = random_wave(48_000, 3);
        let back = istft(&stft(&w, &cfg).unwrap()).unwrap();
        assert_eq!(back.len(), 48_000);
        let err = w
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn single_frame_has_local_support() {
        let cfg = StftConfig::default();
        let mut spec = ComplexSpectrogram::zeros(10, cfg);
        for k in 0..cfg.bins() {
            spec.real.set(4, k, 1.0 + k as f64 * 0.01);
        }
        let w = istft(&spec).unwrap();
        for (n, v) in w.samples.iter().enumerate() {
            if !(4 * cfg.hop..4 * cfg.hop + cfg.win_len).contains(&n) {
                assert_eq!(*v, 0.0, "sample {n}");
            }
        }
    }

    #[test]
    fn parseval_energy() {
        let cfg = StftConfig::default();
        let w = random_wave(512, 11);
        let spec = stft(&w, &cfg).unwrap();
        let win = cfg.window.coefficients(512);
        let time: f64 = w.samples.iter().zip(&win).map(|(x, h)| (x * h).powi(2)).sum();
        let n = cfg.fft_size;
        let mut freq = 0.0;
        for k in 0..cfg.bins() {
            let e = spec.real.get(0, k).powi(2) + spec.imag.get(0, k).powi(2);
            freq += if k == 0 || k == n / 2 { e } else { 2.0 * e };
        }
        freq /= n as f64;
        assert!((time - freq).abs() / time < 1e-6);
    }

    #[test]
    fn polar_conventions() {
        assert_eq!(polar(3.0, 4.0), (5.0, 0.6, 0.8));
        assert_eq!(polar(0.0, 0.0), (0.0, 1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (_, c, s) = polar(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            assert!((c * c + s * s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = StftConfig::default();
        let empty = Waveform {
            samples: vec![],
            sample_rate: SAMPLE_RATE,
        };
        assert!(matches!(stft(&empty, &cfg), Err(Error::InvalidInput(_))));
        let nan = Waveform {
            samples: vec![f64::NAN; 1024],
            sample_rate: SAMPLE_RATE,
        };
        assert!(matches!(stft(&nan, &cfg), Err(Error::InvalidInput(_))));
        assert!(Waveform::new(vec![f64::INFINITY], SAMPLE_RATE).is_err());
        let bad = StftConfig {
            hop: 100,
            ..cfg
        };
        assert!(bad.validate().is_err());
        let mut spec = ComplexSpectrogram::zeros(3, cfg);
        spec.imag = Matrix::zeros(3, 10);
        assert!(matches!(istft(&spec), Err(Error::InvalidInput(_))));
    }
}
