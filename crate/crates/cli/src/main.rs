mod error;
mod wav;

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpcrn::dsp::{StftConfig, SAMPLE_RATE};
use mpcrn::gradcheck::{run_gradcheck, THRESHOLD};
use mpcrn::metrics::{seg_snr, si_sdr};
use mpcrn::model::{count_macs, count_params, MaskHead, ModelConfig, Mpcrn};
use mpcrn::recon::ReconstructionMode;
use mpcrn::stream::{benchmark_rtf, Enhancer};
use mpcrn::train::{run_ablation, train, TrainSetup};
use serde_json::{json, Value};

use error::CliError;

/// Causal speech enhancement with magnitude and normalized complex ratio masks.
#[derive(Debug, Parser)]
#[command(name = "mpcrn", version)]
struct Cli {
    /// Seed for initialization and data; falls back to MPCRN_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enhance a 16 kHz mono PCM16 WAV file.
    Enhance(EnhanceArgs),
    /// Train a model from a key=value config file.
    Train(TrainArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck,
    /// Train one toy model per reconstruction mode and compare SI-SDR.
    Ablate(AblateArgs),
    /// Measure the streaming real-time factor.
    Bench(BenchArgs),
    /// SI-SDR and segmental SNR of an estimate against a reference.
    Metrics(MetricsArgs),
    /// Stream raw 16 kHz mono PCM16 (little endian) from stdin to stdout.
    Pipe(PipeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Pipeline {
    Offline,
    Stream,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Pipeline::Offline)]
    mode: Pipeline,
    /// polar, r, c or e; defaults to what the checkpoint's mask head supports.
    #[arg(long)]
    recon: Option<ReconstructionMode>,
    /// Clean reference for SI-SDR reporting.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Bypass the network and apply unit masks.
    #[arg(long, hide = true)]
    identity_mask: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    config: PathBuf,
    /// Directory for checkpoints and the loss curve.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Training config; the built-in toy setup is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optimizer steps per mode.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Benchmark the small toy network instead of the default one.
    #[arg(long)]
    toy: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    estimate: PathBuf,
    reference: PathBuf,
    #[arg(long, default_value_t = 256)]
    frame_len: usize,
}

#[derive(Debug, Args)]
struct PipeArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    recon: Option<ReconstructionMode>,
    /// Frames between JSON progress lines on stderr; 0 reports only at the end.
    #[arg(long, default_value_t = 125)]
    report_every: u64,
    #[arg(long, hide = true)]
    identity_mask: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = resolve_seed(cli.seed, std::env::var("MPCRN_SEED").ok())?;
    let report = match cli.command {
        Command::Enhance(a) => enhance(&a)?,
        Command::Train(a) => train_cmd(&a, seed)?,
        Command::Gradcheck => gradcheck(seed)?,
        Command::Ablate(a) => ablate(&a, seed)?,
        Command::Bench(a) => bench(&a, seed)?,
        Command::Metrics(a) => metrics(&a)?,
        Command::Pipe(a) => pipe(&a)?,
    };
    if !report.is_null() {
        println!("{report}");
    }
    Ok(())
}

fn resolve_seed(flag: Option<u64>, env: Option<String>) -> Result<Option<u64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| mpcrn::Error::InvalidInput(format!("MPCRN_SEED={v:?} is not an unsigned integer")).into()),
    }
}

fn load_checkpoint(path: &Path) -> Result<(Mpcrn, mpcrn::nn::ModelParams<f32>), CliError> {
    let f = File::open(path).map_err(|e| {
        mpcrn::Error::Io(std::io::Error::new(e.kind(), format!("checkpoint {}: {e}", path.display())))
    })?;
    Ok(Mpcrn::load(&mut BufReader::new(f))?)
}

fn build_enhancer(
    checkpoint: Option<&PathBuf>,
    recon: Option<ReconstructionMode>,
    identity: bool,
) -> Result<Enhancer, CliError> {
    if identity {
        return Ok(Enhancer::identity());
    }
    let path = checkpoint.ok_or_else(|| mpcrn::Error::InvalidInput("--checkpoint is required".into()))?;
    let (model, params) = load_checkpoint(path)?;
    let recon = recon.unwrap_or(match model.head() {
        MaskHead::Polar => ReconstructionMode::Polar,
        MaskHead::Cartesian => ReconstructionMode::C,
    });
    Ok(Enhancer::new(model, params, recon)?)
}

fn enhance(a: &EnhanceArgs) -> Result<Value, CliError> {
    let enhancer = build_enhancer(a.checkpoint.as_ref(), a.recon, a.identity_mask)?;
    let noisy = wav::read(&a.input)?;
    let out = match a.mode {
        Pipeline::Offline => enhancer.enhance_offline(&noisy)?,
        Pipeline::Stream => enhancer.enhance_streaming(&noisy)?,
    };
    if out.samples.iter().any(|v| !v.is_finite()) {
        return Err(mpcrn::Error::Numerical("enhanced waveform".into()).into());
    }
    let clipped = wav::write(&a.output, &out)?;
    let mode = match a.mode {
        Pipeline::Offline => "offline",
        Pipeline::Stream => "stream",
    };
    let mut report = json!({
        "output": a.output.display().to_string(),
        "samples": out.len(),
        "mode": mode,
        "recon": enhancer.recon_mode().as_str(),
        "clipped_samples": clipped,
    });
    eprintln!(
        "enhanced {} ({:.2} s, {mode}, {}) -> {}",
        a.input.display(),
        noisy.duration_secs(),
        enhancer.recon_mode(),
        a.output.display()
    );
    if clipped > 0 {
        eprintln!("warning: {clipped} samples clipped to the PCM16 range");
    }
    if let Some(clean_path) = &a.clean {
        let clean = wav::read(clean_path)?;
        let (before, after) = (si_sdr(&noisy, &clean)?, si_sdr(&out, &clean)?);
        report["si_sdr_noisy_db"] = json!(before);
        report["si_sdr_enhanced_db"] = json!(after);
        report["si_sdr_improvement_db"] = json!(after - before);
        eprintln!("SI-SDR {before:.2} dB -> {after:.2} dB ({:+.2} dB)", after - before);
    }
    Ok(report)
}

fn read_setup(path: &Path) -> Result<TrainSetup, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        mpcrn::Error::Io(std::io::Error::new(e.kind(), format!("config {}: {e}", path.display())))
    })?;
    Ok(TrainSetup::from_text(&text)?)
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> Result<Value, CliError> {
    let mut setup = read_setup(&a.config)?;
    if let Some(s) = seed {
        setup.train.seed = s;
    }
    let out = train(&setup.model, &setup.train, &setup.data, Some(&a.out))?;
    let last = out.curve.last();
    let last_val = out.curve.iter().rev().find_map(|p| p.val_loss);
    eprintln!(
        "{} steps, final lr {:.3e}, train loss {}, val loss {}",
        out.steps,
        out.final_lr,
        last.map_or("n/a".into(), |p| format!("{:.4}", p.train_loss)),
        last_val.map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    Ok(json!({
        "steps": out.steps,
        "seed": setup.train.seed,
        "final_lr": out.final_lr,
        "first_train_loss": out.curve.first().map(|p| p.train_loss),
        "final_train_loss": last.map(|p| p.train_loss),
        "final_val_loss": last_val,
        "loss_curve": a.out.join("loss_curve.csv").display().to_string(),
        "checkpoints": out.checkpoints.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

fn gradcheck(seed: Option<u64>) -> Result<Value, CliError> {
    let report = run_gradcheck(seed.unwrap_or(0))?;
    for (layer, err) in report.worst_by_layer() {
        let verdict = if err < THRESHOLD { "ok" } else { "FAIL" };
        eprintln!("{verdict:>4}  {layer:<32} max rel err {err:.2e}");
    }
    let entries: Vec<Value> = report
        .entries
        .iter()
        .map(|e| {
            json!({
                "layer": e.layer,
                "shape": e.shape,
                "tensor": e.tensor,
                "max_rel_err": e.max_rel_err,
                "passed": e.passed(),
            })
        })
        .collect();
    let value = json!({ "passed": report.passed(), "threshold": THRESHOLD, "entries": entries });
    if report.passed() {
        Ok(value)
    } else {
        println!("{value}");
        let failed: Vec<String> = report.failures().map(|e| format!("{} {}", e.layer, e.tensor)).collect();
        Err(CliError::Gradcheck(failed.join(", ")))
    }
}

fn ablate(a: &AblateArgs, seed: Option<u64>) -> Result<Value, CliError> {
    let mut setup = match &a.config {
        Some(p) => read_setup(p)?,
        None => TrainSetup::toy(100),
    };
    if let Some(steps) = a.steps {
        setup.train.max_steps = steps;
    }
    if let Some(s) = seed {
        setup.train.seed = s;
    }
    let rows = run_ablation(&setup.model, &setup.train, &setup.data, &ReconstructionMode::ALL)?;
    let mut scores = serde_json::Map::new();
    let mut details = Vec::new();
    for r in &rows {
        eprintln!(
            "{:<6} loss {:.4} -> {:.4}  SI-SDR {:.2} dB ({:+.2} dB over noisy)",
            r.mode,
            r.first_loss,
            r.final_loss,
            r.si_sdr.enhanced_db,
            r.si_sdr.improvement_db()
        );
        scores.insert(r.mode.as_str().into(), json!(r.si_sdr.enhanced_db));
        details.push(json!({
            "mode": r.mode.as_str(),
            "first_loss": r.first_loss,
            "final_loss": r.final_loss,
            "si_sdr_noisy_db": r.si_sdr.noisy_db,
            "si_sdr_enhanced_db": r.si_sdr.enhanced_db,
        }));
    }
    Ok(json!({ "si_sdr_db": scores, "steps": setup.train.max_steps, "seed": setup.train.seed, "rows": details }))
}

fn bench(a: &BenchArgs, seed: Option<u64>) -> Result<Value, CliError> {
    let cfg = if a.toy { ModelConfig::toy() } else { ModelConfig::default() };
    let r = benchmark_rtf(&cfg, a.seconds, a.runs, seed.unwrap_or(0))?;
    let stft = StftConfig::default();
    let gmacs = count_macs(&cfg, stft.bins()) as f64 * SAMPLE_RATE as f64 / stft.hop as f64 / 1e9;
    let params = count_params(&cfg);
    eprintln!(
        "{params} parameters, {gmacs:.3} GMAC/s; median {:.3} s for {:.1} s of audio, RTF {:.3}",
        r.median_seconds, r.audio_seconds, r.rtf
    );
    Ok(json!({
        "rtf": r.rtf,
        "median_seconds": r.median_seconds,
        "audio_seconds": r.audio_seconds,
        "run_seconds": r.run_seconds,
        "params": params,
        "gmacs_per_second": gmacs,
    }))
}

fn metrics(a: &MetricsArgs) -> Result<Value, CliError> {
    let (est, reference) = (wav::read(&a.estimate)?, wav::read(&a.reference)?);
    let sdr = si_sdr(&est, &reference)?;
    let seg = seg_snr(&est, &reference, a.frame_len)?;
    eprintln!("SI-SDR {sdr:.2} dB, segmental SNR {seg:.2} dB");
    Ok(json!({ "si_sdr_db": sdr, "seg_snr_db": seg }))
}

fn pipe(a: &PipeArgs) -> Result<Value, CliError> {
    let enhancer = build_enhancer(a.checkpoint.as_ref(), a.recon, a.identity_mask)?;
    let mut st = enhancer.new_stream()?;
    let stft = *enhancer.stft_config();
    let (mut stdin, mut stdout) = (std::io::stdin().lock(), std::io::stdout().lock());
    let mut buf = vec![0u8; 2 * stft.hop];
    let mut carry: Option<u8> = None;
    let (mut received, mut emitted, mut clipped) = (0usize, 0usize, 0usize);
    let mut compute = 0.0;
    let mut next_report = a.report_every;
    let mut bytes = Vec::new();
    let mut write_out = |out: &[f64], clipped: &mut usize, emitted: &mut usize| -> Result<(), CliError> {
        bytes.clear();
        for &x in out {
            let (q, c) = wav::quantize(x);
            *clipped += c as usize;
            bytes.extend_from_slice(&q.to_le_bytes());
        }
        *emitted += out.len();
        stdout.write_all(&bytes).and_then(|_| stdout.flush()).map_err(mpcrn::Error::Io)?;
        Ok(())
    };
    let progress = |frames: u64, received: usize, compute: f64| {
        let audio = received as f64 / SAMPLE_RATE as f64;
        json!({
            "frames": frames,
            "audio_seconds": audio,
            "compute_seconds": compute,
            "rtf": if audio > 0.0 { compute / audio } else { 0.0 },
            "algorithmic_latency_ms": 1e3 * stft.win_len as f64 / SAMPLE_RATE as f64,
        })
    };
    loop {
        let n = match stdin.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(mpcrn::Error::Io(e).into()),
        };
        let mut samples = Vec::with_capacity(n / 2 + 1);
        let mut rest = &buf[..n];
        if let Some(lo) = carry.take() {
            samples.push(i16::from_le_bytes([lo, rest[0]]) as f64 / 32768.0);
            rest = &rest[1..];
        }
        let mut pairs = rest.chunks_exact(2);
        samples.extend(pairs.by_ref().map(|p| i16::from_le_bytes([p[0], p[1]]) as f64 / 32768.0));
        carry = pairs.remainder().first().copied();
        received += samples.len();
        let start = std::time::Instant::now();
        let out = enhancer.push(&mut st, &samples)?;
        compute += start.elapsed().as_secs_f64();
        write_out(&out, &mut clipped, &mut emitted)?;
        if a.report_every > 0 && st.frames_processed() >= next_report {
            eprintln!("{}", progress(st.frames_processed(), received, compute));
            next_report = st.frames_processed() + a.report_every;
        }
    }
    if carry.is_some() {
        eprintln!("warning: dropped a trailing odd byte");
    }
    if received > 0 {
        let start = std::time::Instant::now();
        let out = enhancer.flush(&mut st)?;
        compute += start.elapsed().as_secs_f64();
        write_out(&out, &mut clipped, &mut emitted)?;
    }
    let mut summary = progress(st.frames_processed(), received, compute);
    summary["samples_in"] = json!(received);
    summary["samples_out"] = json!(emitted);
    summary["clipped_samples"] = json!(clipped);
    eprintln!("{summary}");
    Ok(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_flag_wins_over_env() {
        assert_eq!(resolve_seed(Some(3), Some("9".into())).unwrap(), Some(3));
        assert_eq!(resolve_seed(None, Some(" 9 ".into())).unwrap(), Some(9));
        assert_eq!(resolve_seed(None, None).unwrap(), None);
        assert_eq!(resolve_seed(None, Some("x".into())).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
