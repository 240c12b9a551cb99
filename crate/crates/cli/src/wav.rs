//! 16 kHz mono PCM16 WAV input and output.

use std::path::Path;

use mpcrn::dsp::{Waveform, SAMPLE_RATE};

use crate::error::CliError;

const SCALE: f64 = 32768.0;

pub fn read(path: &Path) -> Result<Waveform, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    // anything hound rejects after the file opened counts as malformed
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| malformed(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(invalid(path, format!("sample rate is {} Hz, expected {SAMPLE_RATE} Hz (no resampling is done)", spec.sample_rate)));
    }
    if spec.channels != 1 {
        return Err(invalid(path, format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(invalid(path, format!("{}-bit {:?} samples, expected 16-bit PCM", spec.bits_per_sample, spec.sample_format)));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| malformed(path, e))?;
    if samples.is_empty() {
        return Err(invalid(path, "no samples".into()));
    }
    Ok(Waveform::new(samples, SAMPLE_RATE)?)
}

/// Writes PCM16; returns how many samples had to be clipped.
pub fn write(path: &Path, w: &Waveform) -> Result<usize, CliError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    let mut clipped = 0;
    for &x in &w.samples {
        let (q, clip) = quantize(x);
        clipped += clip as usize;
        out.write_sample(q).map_err(|e| wav_error(path, e))?;
    }
    out.finalize().map_err(|e| wav_error(path, e))?;
    Ok(clipped)
}

/// PCM16 value for `x` and whether it had to be clipped.
pub fn quantize(x: f64) -> (i16, bool) {
    let v = (x * SCALE).round();
    let c = v.clamp(i16::MIN as f64, i16::MAX as f64);
    (c as i16, c != v || !x.is_finite())
}

fn invalid(path: &Path, msg: String) -> CliError {
    CliError::Core(mpcrn::Error::InvalidInput(format!("{}: {msg}", path.display())))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(mpcrn::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn malformed(path: &Path, e: hound::Error) -> CliError {
    CliError::Wav {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn wav_error(path: &Path, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(io) => io_error(path, io),
        other => malformed(path, other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: hound::WavSpec, samples: &[i16]) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn pcm16(rate: u32, channels: u16) -> hound::WavSpec {
        hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
        let samples: Vec<i16> = (0..5000).map(|i| ((i * 7919) % 65536 - 32768) as i16).collect();
        write_raw(&a, pcm16(SAMPLE_RATE, 1), &samples);
        let w = read(&a).unwrap();
        assert_eq!(write(&b, &w).unwrap(), 0);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn rejects_wrong_rate_and_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        write_raw(&p, pcm16(44_100, 1), &[0; 100]);
        assert!(matches!(read(&p), Err(CliError::Core(mpcrn::Error::InvalidInput(m))) if m.contains("44100")));
        write_raw(&p, pcm16(SAMPLE_RATE, 2), &[0; 100]);
        assert!(matches!(read(&p), Err(CliError::Core(mpcrn::Error::InvalidInput(m))) if m.contains("mono")));
    }

    #[test]
    fn garbage_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        std::fs::write(&p, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
        let e = read(&p).unwrap_err();
        assert!(matches!(e, CliError::Wav { .. }), "{e:?}");
    }

    #[test]
    fn quantize_clips_and_rounds() {
        assert_eq!(quantize(0.5), (16384, false));
        assert_eq!(quantize(1.0), (i16::MAX, true));
        assert_eq!(quantize(-1.0), (i16::MIN, false));
        assert_eq!(quantize(f64::NAN).1, true);
    }
}
