//! Magnitude and real/imaginary spectral losses with their gradients.

use crate::dsp::ComplexSpectrogram;
use crate::error::{Error, Result};

/// Added under the magnitude square root so the gradient stays finite at zero.
pub const MAG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_mag: f64,
    pub alpha_ri: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_mag: 1.0,
            alpha_ri: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha_mag: f64, alpha_ri: f64) -> Result<Self> {
        if !(alpha_mag >= 0.0 && alpha_ri >= 0.0) {
            return Err(Error::invalid(format!(
                "loss weights must be non-negative, got ({alpha_mag}, {alpha_ri})"
            )));
        }
        Ok(Self { alpha_mag, alpha_ri })
    }
}

#[inline]
fn stable_mag(re: f64, im: f64) -> f64 {
    (re * re + im * im + MAG_EPS).sqrt()
}

fn check(est: &ComplexSpectrogram, target: &ComplexSpectrogram, stage: &str) -> Result<usize> {
    if !est.same_shape(target) {
        return Err(Error::shape(
            stage,
            format!("{:?} vs {:?}", est.real.dims(), target.real.dims()),
        ));
    }
    let n = est.frames() * est.bins();
    if n == 0 {
        return Err(Error::invalid("empty spectrogram"));
    }
    Ok(n)
}

/// Mean squared magnitude error.
pub fn loss_mag(est: &ComplexSpectrogram, target: &ComplexSpectrogram) -> Result<f64> {
    let n = check(est, target, "loss_mag")?;
    let (er, ei) = (est.real.as_slice(), est.imag.as_slice());
    let (tr, ti) = (target.real.as_slice(), target.imag.as_slice());
    let sum: f64 = (0..n)
        .map(|i| {
            let d = stable_mag(er[i], ei[i]) - stable_mag(tr[i], ti[i]);
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// Mean squared real-part error plus mean squared imaginary-part error.
pub fn loss_ri(est: &ComplexSpectrogram, target: &ComplexSpectrogram) -> Result<f64> {
    let n = check(est, target, "loss_ri")?;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let sr = sq(est.real.as_slice(), target.real.as_slice());
    let si = sq(est.imag.as_slice(), target.imag.as_slice());
    Ok(sr / n as f64 + si / n as f64)
}

pub fn loss_total(est: &ComplexSpectrogram, target: &ComplexSpectrogram, w: LossWeights) -> Result<f64> {
    Ok(w.alpha_mag * loss_mag(est, target)? + w.alpha_ri * loss_ri(est, target)?)
}

/// Total loss and its gradient with respect to the estimate's real and imaginary planes.
pub fn loss_total_with_grad(
    est: &ComplexSpectrogram,
    target: &ComplexSpectrogram,
    w: LossWeights,
) -> Result<(f64, ComplexSpectrogram)> {
    let n = check(est, target, "loss_total")?;
    let scale = 2.0 / n as f64;
    let mut grad = ComplexSpectrogram::zeros(est.frames(), est.config);
    let (er, ei) = (est.real.as_slice(), est.imag.as_slice());
    let (tr, ti) = (target.real.as_slice(), target.imag.as_slice());
    let (mut mag_sum, mut r_sum, mut i_sum) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let m_est = stable_mag(er[i], ei[i]);
        let dm = m_est - stable_mag(tr[i], ti[i]);
        let (dr, di) = (er[i] - tr[i], ei[i] - ti[i]);
        mag_sum += dm * dm;
        r_sum += dr * dr;
        i_sum += di * di;
        let k = w.alpha_mag * scale * dm / m_est;
        grad.real.as_mut_slice()[i] = k * er[i] + w.alpha_ri * scale * dr;
        grad.imag.as_mut_slice()[i] = k * ei[i] + w.alpha_ri * scale * di;
    }
    let nf = n as f64;
    let loss = w.alpha_mag * (mag_sum / nf) + w.alpha_ri * (r_sum / nf + i_sum / nf);
    Ok((loss, grad))
}
