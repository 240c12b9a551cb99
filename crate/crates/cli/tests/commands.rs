use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpcrn::model::Mpcrn;
use mpcrn::train::TrainSetup;
use serde_json::Value;

fn mpcrn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mpcrn"));
    c.env_remove("MPCRN_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    mpcrn().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap_or_default())
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {text}\nstderr: {}", String::from_utf8_lossy(&out.stderr)))
}

fn write_wav(path: &Path, rate: u32, channels: u16, samples: &[i16]) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

fn read_samples(path: &Path) -> Vec<i16> {
    hound::WavReader::open(path).unwrap().into_samples::<i16>().map(Result::unwrap).collect()
}

fn test_signal(n: usize) -> Vec<i16> {
    (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            let v = 0.3 * (2.0 * std::f64::consts::PI * 220.0 * t).sin() + 0.05 * ((i * 7919 % 1000) as f64 / 500.0 - 1.0);
            (v * 32767.0).round() as i16
        })
        .collect()
}

const TINY_CONFIG: &str = "\
# tiny network
enc_channels = 3,4,4,4,4
psm_hidden = 4
epochs = 0
";

fn tiny_checkpoint(dir: &Path, recon: &str, seed: u64) -> PathBuf {
    let cfg = dir.join(format!("{recon}.cfg"));
    std::fs::write(&cfg, format!("{TINY_CONFIG}recon = {recon}\n")).unwrap();
    let out = dir.join(format!("run_{recon}"));
    let o = run(&["train", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", &seed.to_string()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("final.ckpt")
}

#[test]
fn identity_enhance_reproduces_input_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    let x = test_signal(8000);
    write_wav(&input, 16_000, 1, &x);
    for mode in ["offline", "stream"] {
        let o = run(&["enhance", input.to_str().unwrap(), output.to_str().unwrap(), "--identity-mask", "--mode", mode]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(read_samples(&output), x);
        assert_eq!(json(&o)["samples"], 8000);
    }
}

#[test]
fn enhance_reports_si_sdr_against_clean_reference() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    write_wav(&input, 16_000, 1, &test_signal(4000));
    let ckpt = tiny_checkpoint(dir.path(), "polar", 1);
    let o = run(&[
        "enhance",
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--clean",
        input.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["recon"], "polar");
    assert_eq!(v["si_sdr_noisy_db"], 100.0);
    assert!(v["si_sdr_enhanced_db"].as_f64().unwrap().is_finite());
    assert_eq!(read_samples(&output).len(), 4000);
}

#[test]
fn c_and_e_outputs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    write_wav(&input, 16_000, 1, &test_signal(6000));
    let ckpt = tiny_checkpoint(dir.path(), "c", 2);
    let mut outs = Vec::new();
    for recon in ["c", "e"] {
        let out = dir.path().join(format!("{recon}.wav"));
        let o = run(&[
            "enhance",
            input.to_str().unwrap(),
            out.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--recon",
            recon,
            "--mode",
            "stream",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn head_mismatch_and_missing_checkpoint_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    write_wav(&input, 16_000, 1, &test_signal(2000));
    let (i, o) = (input.to_str().unwrap(), output.to_str().unwrap());

    let missing = run(&["enhance", i, o, "--checkpoint", dir.path().join("nope.ckpt").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.ckpt"));
    assert_eq!(run(&["enhance", i, o]).status.code(), Some(2));

    let ckpt = tiny_checkpoint(dir.path(), "polar", 3);
    let wrong = run(&["enhance", i, o, "--checkpoint", ckpt.to_str().unwrap(), "--recon", "r"]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("mask head"));
}

#[test]
fn rejects_unsupported_and_malformed_wavs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.wav");
    let out = dir.path().join("y.wav");
    let enhance = |p: &Path| run(&["enhance", p.to_str().unwrap(), out.to_str().unwrap(), "--identity-mask"]);

    write_wav(&p, 8_000, 1, &[0; 800]);
    let o = enhance(&p);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("8000 Hz"));

    write_wav(&p, 16_000, 2, &[0; 800]);
    assert!(String::from_utf8_lossy(&enhance(&p).stderr).contains("mono"));

    std::fs::write(&p, b"not a wav file at all").unwrap();
    let o = enhance(&p);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("malformed WAV"));
    assert!(!out.exists());
}

#[test]
fn train_with_zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "polar", 7);
    let csv = std::fs::read_to_string(ckpt.with_file_name("loss_curve.csv")).unwrap();
    assert_eq!(csv.trim(), "step,train_loss,val_loss,lr");

    let setup = TrainSetup::from_text(&format!("{TINY_CONFIG}recon = polar\n")).unwrap();
    let (model, params) = Mpcrn::new::<f32>(&setup.model, 7).unwrap();
    let mut expected = Vec::new();
    model.save(&mut expected, &params).unwrap();
    assert_eq!(std::fs::read(&ckpt).unwrap(), expected);
}

#[test]
fn train_is_deterministic_under_seed_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(
        &cfg,
        "enc_channels = 3,4,4,4,4\npsm_hidden = 4\nepochs = 1\nmax_steps = 2\nbatch_size = 2\n\
         chunk_seconds = 0.25\ntrain_count = 4\nval_count = 2\nutterance_seconds = 0.3\n",
    )
    .unwrap();
    let go = |name: &str, seed: Option<&str>, env: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = mpcrn();
        c.args(["train", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        if let Some(s) = seed {
            c.args(["--seed", s]);
        }
        if let Some(e) = env {
            c.env("MPCRN_SEED", e);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&o)["steps"], 2);
        (std::fs::read(out.join("final.ckpt")).unwrap(), std::fs::read_to_string(out.join("loss_curve.csv")).unwrap())
    };
    let a = go("a", Some("11"), None);
    assert_eq!(a, go("b", Some("11"), None));
    assert_eq!(a, go("c", None, Some("11")));
    assert_ne!(a.0, go("d", Some("12"), None).0);
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "# fine\nepochs = 0\nlr = fast\n").unwrap();
    let o = run(&["train", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&cfg, "epochs = 0\nlearning_rate = 1\n").unwrap();
    let o = run(&["train", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn gradcheck_passes_and_emits_json() {
    let o = run(&["gradcheck", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    let entries = v["entries"].as_array().unwrap();
    assert!(entries.iter().all(|e| e["max_rel_err"].as_f64().unwrap() < 1e-4));
    for layer in ["conv2d_causal", "tconv2d_causal", "batchnorm2d", "layernorm", "prelu", "gru", "bigru"] {
        assert!(entries.iter().any(|e| e["layer"] == layer), "{layer}");
    }
}

#[test]
fn ablate_reports_four_modes_with_c_equal_e() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    std::fs::write(
        &cfg,
        "enc_channels = 3,4,4,4,4\npsm_hidden = 4\nepochs = 1\nbatch_size = 2\nchunk_seconds = 0.25\n\
         train_count = 4\nval_count = 2\nutterance_seconds = 0.5\nsnr_db = 0\nnoise = white\n",
    )
    .unwrap();
    let o = run(&["ablate", "--config", cfg.to_str().unwrap(), "--steps", "2", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let s = &v["si_sdr_db"];
    for m in ["polar", "r", "c", "e"] {
        assert!(s[m].as_f64().unwrap().is_finite(), "{m}");
    }
    assert!((s["c"].as_f64().unwrap() - s["e"].as_f64().unwrap()).abs() <= 0.01);
}

#[test]
fn bench_and_metrics_emit_json() {
    let o = run(&["bench", "--toy", "--seconds", "0.5", "--runs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&o)["rtf"].as_f64().unwrap() > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    let x = test_signal(3200);
    write_wav(&a, 16_000, 1, &x);
    write_wav(&b, 16_000, 1, &x.iter().map(|v| v / 2).collect::<Vec<_>>());
    let o = run(&["metrics", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&o)["si_sdr_db"].as_f64().unwrap() > 40.0);
}

#[test]
fn pipe_streams_pcm_through_stdin_and_stdout() {
    use std::io::Write;
    use std::process::Stdio;

    let x = test_signal(5001);
    let bytes: Vec<u8> = x.iter().flat_map(|v| v.to_le_bytes()).collect();
    let mut child = mpcrn()
        .args(["pipe", "--identity-mask", "--report-every", "10"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    // odd-sized writes split samples across reads
    for part in bytes.chunks(333) {
        stdin.write_all(part).unwrap();
    }
    drop(stdin);
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let y: Vec<i16> = o.stdout.chunks_exact(2).map(|p| i16::from_le_bytes([p[0], p[1]])).collect();
    assert_eq!(y, x);
    let lines: Vec<Value> = String::from_utf8_lossy(&o.stderr)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines.len() >= 2);
    let last = lines.last().unwrap();
    assert_eq!(last["samples_in"], 5001);
    assert_eq!(last["samples_out"], 5001);
    assert_eq!(last["algorithmic_latency_ms"], 32.0);
}
