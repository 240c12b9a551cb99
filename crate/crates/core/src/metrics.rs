//! Objective quality measures on waveforms.

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Upper bound reported for a perfect (zero-residual) estimate.
pub const SI_SDR_CAP_DB: f64 = 100.0;

fn check_lengths(est: &[f64], reference: &[f64]) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::invalid(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::invalid("empty signals"));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to `±100`.
pub fn si_sdr_slices(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(est, reference)?;
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::invalid("reference signal is all zeros"));
    }
    let alpha = est.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (&e, &r) in est.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    if residual == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    si_sdr_slices(&est.samples, &reference.samples)
}

/// Frames quieter than this fraction of the loudest reference frame are skipped.
pub const SEG_SNR_ACTIVITY: f64 = 1e-6;

/// Mean of per-frame SNRs clamped to `[floor_db, ceil_db]` over active reference frames.
pub fn seg_snr_slices(
    est: &[f64],
    reference: &[f64],
    frame_len: usize,
    floor_db: f64,
    ceil_db: f64,
) -> Result<f64> {
    check_lengths(est, reference)?;
    if frame_len == 0 || floor_db > ceil_db {
        return Err(Error::invalid("frame length must be positive and floor <= ceil"));
    }
    let energies: Vec<(f64, f64)> = est
        .chunks(frame_len)
        .zip(reference.chunks(frame_len))
        .map(|(e, r)| {
            let sig: f64 = r.iter().map(|v| v * v).sum();
            let err: f64 = e.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            (sig, err)
        })
        .collect();
    let loudest = energies.iter().map(|e| e.0).fold(0.0, f64::max);
    if loudest == 0.0 {
        return Err(Error::invalid("reference contains no active frames"));
    }
    let threshold = loudest * SEG_SNR_ACTIVITY;
    let snrs: Vec<f64> = energies
        .iter()
        .filter(|(sig, _)| *sig > threshold)
        .map(|&(sig, err)| {
            if err == 0.0 {
                ceil_db
            } else {
                (10.0 * (sig / err).log10()).clamp(floor_db, ceil_db)
            }
        })
        .collect();
    Ok(snrs.iter().sum::<f64>() / snrs.len() as f64)
}

/// Segmental SNR with the usual `[-10, 35]` dB clamp.
pub fn seg_snr(est: &Waveform, reference: &Waveform, frame_len: usize) -> Result<f64> {
    seg_snr_slices(&est.samples, &reference.samples, frame_len, -10.0, 35.0)
}
