//! Signal-approximation training on synthetic mixtures.
//!
//! Each step transforms a batch of random crops, runs the network in training
//! mode, reconstructs the enhanced spectra, and back-propagates the combined
//! spectral loss into an RMSprop update. The learning rate halves on
//! validation plateaus.

pub mod optim;
pub mod schedule;
pub mod synth;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::dsp::{self, ComplexSpectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::loss::{loss_total, loss_total_with_grad, LossWeights};
use crate::metrics::si_sdr;
use crate::model::{self, MaskHead, ModelConfig, Mpcrn, MODEL_KEYS};
use crate::nn::{FeatureTensor, Mode, ModelParams};
use crate::recon::{self, ReconstructionMode};
use crate::stream::Enhancer;

pub use optim::RmsProp;
pub use schedule::PlateauScheduler;
pub use synth::{synth_batch, MixPair, NoiseKind, SynthMixSpec, ToneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub rmsprop_alpha: f64,
    pub rmsprop_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau_patience: usize,
    pub lr_decay: f64,
    pub chunk_seconds: f64,
    pub seed: u64,
    /// Stops after this many optimizer steps; 0 means no limit.
    pub max_steps: usize,
    /// Writes a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub loss: LossWeights,
    pub recon: ReconstructionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            rmsprop_alpha: 0.99,
            rmsprop_eps: 1e-8,
            batch_size: 16,
            epochs: 100,
            plateau_patience: 6,
            lr_decay: 0.5,
            chunk_seconds: 3.0,
            seed: 0,
            max_steps: 0,
            checkpoint_every: 0,
            loss: LossWeights::default(),
            recon: ReconstructionMode::Polar,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) || self.plateau_patience == 0 {
            return Err(Error::invalid("need 0 < lr_decay < 1 and plateau_patience >= 1"));
        }
        if self.batch_size == 0 || !(self.chunk_seconds > 0.0) {
            return Err(Error::invalid("batch_size and chunk_seconds must be positive"));
        }
        RmsProp::new(self.rmsprop_alpha, self.rmsprop_eps)?;
        Ok(())
    }

    pub fn chunk_samples(&self) -> usize {
        (self.chunk_seconds * dsp::SAMPLE_RATE as f64).round() as usize
    }
}

/// Held-out and training mixture sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub train: SynthMixSpec,
    pub val: SynthMixSpec,
}

impl Default for DataSpec {
    fn default() -> Self {
        let train = SynthMixSpec {
            count: 64,
            duration_secs: 3.5,
            ..SynthMixSpec::default()
        };
        let val = SynthMixSpec {
            count: 8,
            seed: 1_000_003,
            ..train.clone()
        };
        Self { train, val }
    }
}

const TRAIN_KEYS: [&str; 14] = [
    "lr",
    "rmsprop_alpha",
    "rmsprop_eps",
    "batch_size",
    "epochs",
    "plateau_patience",
    "lr_decay",
    "chunk_seconds",
    "seed",
    "max_steps",
    "checkpoint_every",
    "alpha_mag",
    "alpha_ri",
    "recon",
];

const DATA_KEYS: [&str; 7] = [
    "snr_db",
    "noise",
    "noise_gain",
    "train_count",
    "val_count",
    "utterance_seconds",
    "data_seed",
];

/// Everything a training run needs, read from one `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataSpec,
}

impl TrainSetup {
    /// Unknown keys are rejected; absent keys keep their defaults. The mask
    /// head follows from `recon` unless `head` is given explicitly.
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let known: BTreeSet<&str> = TRAIN_KEYS
            .into_iter()
            .chain(DATA_KEYS)
            .chain(MODEL_KEYS)
            .collect();
        kv.reject_unknown(&known)?;
        let d = TrainConfig::default();
        let recon = match kv.raw("recon") {
            None => d.recon,
            Some(v) => v.parse().map_err(|_| Error::Parse {
                line: kv.line_of("recon").unwrap_or(0),
                msg: format!("unknown reconstruction mode {v:?}"),
            })?,
        };
        let loss = LossWeights::new(
            kv.get("alpha_mag")?.unwrap_or(d.loss.alpha_mag),
            kv.get("alpha_ri")?.unwrap_or(d.loss.alpha_ri),
        )?;
        let train = TrainConfig {
            lr: kv.get("lr")?.unwrap_or(d.lr),
            rmsprop_alpha: kv.get("rmsprop_alpha")?.unwrap_or(d.rmsprop_alpha),
            rmsprop_eps: kv.get("rmsprop_eps")?.unwrap_or(d.rmsprop_eps),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            epochs: kv.get("epochs")?.unwrap_or(d.epochs),
            plateau_patience: kv.get("plateau_patience")?.unwrap_or(d.plateau_patience),
            lr_decay: kv.get("lr_decay")?.unwrap_or(d.lr_decay),
            chunk_seconds: kv.get("chunk_seconds")?.unwrap_or(d.chunk_seconds),
            seed: kv.get("seed")?.unwrap_or(d.seed),
            max_steps: kv.get("max_steps")?.unwrap_or(d.max_steps),
            checkpoint_every: kv.get("checkpoint_every")?.unwrap_or(d.checkpoint_every),
            loss,
            recon,
        };
        train.validate()?;

        let dd = DataSpec::default();
        let noise = match kv.get_list::<String>("noise")? {
            None => dd.train.noise.clone(),
            Some(names) => names
                .iter()
                .map(|n| n.parse())
                .collect::<Result<Vec<NoiseKind>>>()
                .map_err(|e| Error::Parse {
                    line: kv.line_of("noise").unwrap_or(0),
                    msg: e.to_string(),
                })?,
        };
        let data_seed: u64 = kv.get("data_seed")?.unwrap_or(train.seed);
        let train_set = SynthMixSpec {
            snr_db: kv.get_list("snr_db")?.unwrap_or(dd.train.snr_db.clone()),
            noise,
            noise_gain: kv.get("noise_gain")?.unwrap_or(dd.train.noise_gain),
            duration_secs: kv.get("utterance_seconds")?.unwrap_or(dd.train.duration_secs),
            count: kv.get("train_count")?.unwrap_or(dd.train.count),
            seed: data_seed,
            ..dd.train.clone()
        };
        let val_set = SynthMixSpec {
            count: kv.get("val_count")?.unwrap_or(dd.val.count),
            seed: data_seed.wrapping_add(1_000_003),
            ..train_set.clone()
        };
        train_set.validate()?;
        let data = DataSpec {
            train: train_set,
            val: val_set,
        };

        let mut model = ModelConfig::from_key_values(&kv)?;
        if !kv.contains("head") {
            model.head = head_for(recon);
        }
        Ok(Self { model, train, data })
    }
}

impl TrainSetup {
    /// Small network on 0 dB white-noise mixtures; trains in well under a minute.
    pub fn toy(max_steps: usize) -> Self {
        let base = SynthMixSpec {
            snr_db: vec![0.0],
            noise: vec![NoiseKind::White],
            ..SynthMixSpec::default()
        };
        Self {
            model: ModelConfig::toy(),
            train: TrainConfig {
                lr: 1e-3,
                batch_size: 4,
                chunk_seconds: 1.0,
                max_steps,
                epochs: 1000,
                seed: 1,
                ..TrainConfig::default()
            },
            data: DataSpec {
                train: SynthMixSpec {
                    count: 64,
                    duration_secs: 1.5,
                    seed: 5,
                    ..base.clone()
                },
                val: SynthMixSpec {
                    count: 8,
                    duration_secs: 3.0,
                    seed: 77,
                    ..base
                },
            },
        }
    }
}

/// Mask head a reconstruction mode consumes.
pub fn head_for(mode: ReconstructionMode) -> MaskHead {
    if mode.is_polar() {
        MaskHead::Polar
    } else {
        MaskHead::Cartesian
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    /// Filled on the last step of each epoch.
    pub val_loss: Option<f64>,
    pub lr: f64,
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("step,train_loss,val_loss,lr\n");
    for p in curve {
        let val = p.val_loss.map(|v| format!("{v:.9e}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:.9e},{},{:e}", p.step, p.train_loss, val, p.lr);
    }
    s
}

/// Noisy and clean spectra of one training example.
#[derive(Debug, Clone)]
pub struct SpectrumPair {
    pub noisy: ComplexSpectrogram,
    pub clean: ComplexSpectrogram,
}

impl SpectrumPair {
    pub fn new(noisy: &[f64], clean: &[f64], cfg: &StftConfig) -> Result<Self> {
        Ok(Self {
            noisy: dsp::stft(&Waveform::new(noisy.to_vec(), dsp::SAMPLE_RATE)?, cfg)?,
            clean: dsp::stft(&Waveform::new(clean.to_vec(), dsp::SAMPLE_RATE)?, cfg)?,
        })
    }
}

/// Loss of one batch item from the head output, with the head-output gradient if requested.
fn item_loss(
    mode: ReconstructionMode,
    y: &FeatureTensor<f32>,
    b: usize,
    pair: &SpectrumPair,
    w: LossWeights,
    grad: Option<&mut FeatureTensor<f32>>,
    scale: f64,
) -> Result<f64> {
    let x = &pair.noisy;
    if mode.is_polar() {
        let mask = model::mask_triple(y, b)?;
        let est = recon::reconstruct_polar(&mask, x)?;
        let Some(g_out) = grad else {
            return loss_total(&est, &pair.clean, w);
        };
        let (loss, mut g) = loss_total_with_grad(&est, &pair.clean, w)?;
        scale_spectrum(&mut g, scale);
        let d = recon::reconstruct_polar_backward(&mask, x, &g)?;
        model::write_mask_grad(g_out, b, &[&d.mag_mask, &d.cirm_real, &d.cirm_imag])?;
        Ok(loss)
    } else {
        let mask = model::cartesian_mask(y, b)?;
        let est = recon::reconstruct_cartesian(mode, &mask, x)?;
        let Some(g_out) = grad else {
            return loss_total(&est, &pair.clean, w);
        };
        let (loss, mut g) = loss_total_with_grad(&est, &pair.clean, w)?;
        scale_spectrum(&mut g, scale);
        let d = recon::reconstruct_cartesian_backward(mode, &mask, x, &g)?;
        model::write_mask_grad(g_out, b, &[&d.real, &d.imag])?;
        Ok(loss)
    }
}

fn scale_spectrum(s: &mut ComplexSpectrogram, k: f64) {
    for v in s.real.as_mut_slice().iter_mut().chain(s.imag.as_mut_slice()) {
        *v *= k;
    }
}

fn batch_input(batch: &[SpectrumPair]) -> Result<FeatureTensor<f32>> {
    let refs: Vec<&ComplexSpectrogram> = batch.iter().map(|p| &p.noisy).collect();
    model::spectra_to_input(&refs)
}

/// Mean loss over the batch without touching gradients.
pub fn batch_loss(
    model: &Mpcrn,
    p: &mut ModelParams<f32>,
    batch: &[SpectrumPair],
    mode: Mode,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (y, _) = model.forward_layers(p, &batch_input(batch)?, mode, false)?;
    let mut total = 0.0;
    for (b, pair) in batch.iter().enumerate() {
        total += item_loss(cfg.recon, &y, b, pair, cfg.loss, None, 1.0)?;
    }
    Ok(total / batch.len() as f64)
}

/// One forward/backward/update; returns the batch loss before the update.
pub fn train_step(
    model: &Mpcrn,
    p: &mut ModelParams<f32>,
    opt: &mut RmsProp,
    lr: f64,
    batch: &[SpectrumPair],
    cfg: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let (y, trace) = model.forward_train(p, &batch_input(batch)?)?;
    let mut g = FeatureTensor::zeros(y.batch(), y.channels(), y.time(), y.freq());
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (b, pair) in batch.iter().enumerate() {
        total += item_loss(cfg.recon, &y, b, pair, cfg.loss, Some(&mut g), scale)?;
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::Numerical("loss_total".into()));
    }
    p.zero_grad();
    model.backward(p, &trace, &g)?;
    if let Some(e) = p.entries().iter().find(|e| e.grad.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numerical(format!("backward {}", e.name)));
    }
    opt.step(p, lr)?;
    Ok(loss)
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mpcrn,
    pub params: ModelParams<f32>,
    pub curve: Vec<CurvePoint>,
    pub steps: usize,
    pub final_lr: f64,
    /// Checkpoint files written, oldest first.
    pub checkpoints: Vec<PathBuf>,
}

impl TrainOutcome {
    pub fn enhancer(&self, recon: ReconstructionMode) -> Result<Enhancer> {
        Enhancer::new(self.model.clone(), self.params.clone(), recon)
    }
}

fn crop(pair: &MixPair, len: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = pair.clean.len();
    if n <= len {
        return (pair.noisy.samples.clone(), pair.clean.samples.clone());
    }
    let off = rng.random_range(0..=n - len);
    (
        pair.noisy.samples[off..off + len].to_vec(),
        pair.clean.samples[off..off + len].to_vec(),
    )
}

/// First `len` samples of every pair, as a fixed validation batch.
pub fn fixed_chunks(pairs: &[MixPair], len: usize, stft: &StftConfig) -> Result<Vec<SpectrumPair>> {
    pairs
        .iter()
        .map(|p| {
            let n = len.min(p.clean.len());
            SpectrumPair::new(&p.noisy.samples[..n], &p.clean.samples[..n], stft)
        })
        .collect()
}

fn save(model: &Mpcrn, p: &ModelParams<f32>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    model.save(&mut w, p)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Trains from a fresh seeded initialization.
///
/// With `out_dir`, writes `loss_curve.csv`, `final.ckpt` and periodic
/// `epoch{N}.ckpt` files there.
pub fn train(model_cfg: &ModelConfig, cfg: &TrainConfig, data: &DataSpec, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = model_cfg.clone().with_head(head_for(cfg.recon));
    let (model, mut params) = Mpcrn::new::<f32>(&model_cfg, cfg.seed)?;
    let stft = StftConfig::default();
    let train_set = if cfg.epochs > 0 { synth_batch(&data.train)? } else { Vec::new() };
    let val = if cfg.epochs > 0 {
        fixed_chunks(&synth_batch(&data.val)?, cfg.chunk_samples(), &stft)?
    } else {
        Vec::new()
    };
    let mut opt = RmsProp::new(cfg.rmsprop_alpha, cfg.rmsprop_eps)?;
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.lr_decay, cfg.plateau_patience)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);
    let mut curve = Vec::new();
    let mut checkpoints = Vec::new();
    let mut step = 0;
    let chunk = cfg.chunk_samples();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    'epochs: for epoch in 0..cfg.epochs {
        if train_set.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut stop = false;
        for idx in order.chunks(cfg.batch_size) {
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                stop = true;
                break;
            }
            let batch = idx
                .iter()
                .map(|&i| {
                    let (noisy, clean) = crop(&train_set[i], chunk, &mut rng);
                    SpectrumPair::new(&noisy, &clean, &stft)
                })
                .collect::<Result<Vec<_>>>()?;
            let lr = sched.lr();
            let loss = train_step(&model, &mut params, &mut opt, lr, &batch, cfg)?;
            step += 1;
            curve.push(CurvePoint {
                step,
                train_loss: loss,
                val_loss: None,
                lr,
            });
        }
        if curve.last().is_some_and(|p: &CurvePoint| p.val_loss.is_none()) {
            let val_loss = batch_loss(&model, &mut params, &val, Mode::Eval, cfg)?;
            if !val_loss.is_finite() {
                return Err(Error::Numerical("validation loss".into()));
            }
            if let Some(last) = curve.last_mut() {
                last.val_loss = Some(val_loss);
            }
            sched.observe(val_loss);
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                let path = dir.join(format!("epoch{}.ckpt", epoch + 1));
                save(&model, &params, &path)?;
                checkpoints.push(path);
            }
        }
        if stop || (cfg.max_steps > 0 && step >= cfg.max_steps) {
            break 'epochs;
        }
    }

    if let Some(dir) = out_dir {
        std::fs::write(dir.join("loss_curve.csv"), curve_to_csv(&curve))?;
        let path = dir.join("final.ckpt");
        save(&model, &params, &path)?;
        checkpoints.push(path);
    }
    Ok(TrainOutcome {
        model,
        params,
        curve,
        steps: step,
        final_lr: sched.lr(),
        checkpoints,
    })
}

/// Mean SI-SDR of the noisy inputs and of the enhanced outputs over `pairs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiSdrSummary {
    pub noisy_db: f64,
    pub enhanced_db: f64,
}

impl SiSdrSummary {
    pub fn improvement_db(&self) -> f64 {
        self.enhanced_db - self.noisy_db
    }
}

pub fn evaluate_si_sdr(enhancer: &Enhancer, pairs: &[MixPair]) -> Result<SiSdrSummary> {
    if pairs.is_empty() {
        return Err(Error::invalid("no evaluation pairs"));
    }
    let (mut noisy, mut enhanced) = (0.0, 0.0);
    for p in pairs {
        noisy += si_sdr(&p.noisy, &p.clean)?;
        enhanced += si_sdr(&enhancer.enhance_offline(&p.noisy)?, &p.clean)?;
    }
    let n = pairs.len() as f64;
    Ok(SiSdrSummary {
        noisy_db: noisy / n,
        enhanced_db: enhanced / n,
    })
}

/// Outcome of training and scoring one reconstruction variant.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub mode: ReconstructionMode,
    pub first_loss: f64,
    pub final_loss: f64,
    pub si_sdr: SiSdrSummary,
}

/// Trains one model per reconstruction mode with identical data and seed and
/// scores each on the same held-out pairs.
pub fn run_ablation(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &DataSpec,
    modes: &[ReconstructionMode],
) -> Result<Vec<AblationRow>> {
    let held_out = synth_batch(&data.val)?;
    modes
        .iter()
        .map(|&mode| {
            let c = TrainConfig { recon: mode, ..cfg.clone() };
            let out = train(model_cfg, &c, data, None)?;
            let loss_at = |i: usize| out.curve.get(i).map_or(f64::NAN, |p| p.train_loss);
            Ok(AblationRow {
                mode,
                first_loss: loss_at(0),
                final_loss: loss_at(out.curve.len().saturating_sub(1)),
                si_sdr: evaluate_si_sdr(&out.enhancer(mode)?, &held_out)?,
            })
        })
        .collect()
}
