//! Spectrum reconstruction from predicted masks.
//!
//! The polar path applies a bounded magnitude mask and a unit-modulus phase
//! rotation to the noisy spectrum. The Cartesian paths (`R`, `C`, `E`) use a
//! plain complex mask pair and exist for comparison.

use std::fmt;
use std::str::FromStr;

use crate::dsp::{ComplexSpectrogram, Matrix};
use crate::error::{Error, Result};

/// Magnitude mask plus phase-rotation pair, `frames x bins` each.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTriple {
    pub mag_mask: Matrix,
    pub cirm_real: Matrix,
    pub cirm_imag: Matrix,
}

impl MaskTriple {
    /// Unit magnitude and zero rotation.
    pub fn identity(frames: usize, bins: usize) -> Self {
        Self {
            mag_mask: Matrix::filled(frames, bins, 1.0),
            cirm_real: Matrix::filled(frames, bins, 1.0),
            cirm_imag: Matrix::zeros(frames, bins),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mag_mask.dims()
    }

    fn check(&self, x: &ComplexSpectrogram) -> Result<()> {
        let d = x.real.dims();
        if self.mag_mask.dims() != d || self.cirm_real.dims() != d || self.cirm_imag.dims() != d {
            return Err(Error::shape(
                "reconstruct_polar",
                format!("mask {:?} vs spectrum {d:?}", self.mag_mask.dims()),
            ));
        }
        Ok(())
    }
}

/// Complex mask `real + j imag` for the Cartesian variants.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianMask {
    pub real: Matrix,
    pub imag: Matrix,
}

impl CartesianMask {
    fn check(&self, x: &ComplexSpectrogram) -> Result<()> {
        let d = x.real.dims();
        if self.real.dims() != d || self.imag.dims() != d {
            return Err(Error::shape(
                "reconstruct_cartesian",
                format!("mask {:?} vs spectrum {d:?}", self.real.dims()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReconstructionMode {
    Polar,
    /// Real and imaginary parts masked independently.
    R,
    /// Complex multiplication.
    C,
    /// Complex multiplication written in polar form.
    E,
}

impl ReconstructionMode {
    pub const ALL: [ReconstructionMode; 4] = [Self::Polar, Self::R, Self::C, Self::E];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Polar => "polar",
            Self::R => "r",
            Self::C => "c",
            Self::E => "e",
        }
    }

    pub fn is_polar(self) -> bool {
        self == Self::Polar
    }
}

impl fmt::Display for ReconstructionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReconstructionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "polar" => Ok(Self::Polar),
            "r" => Ok(Self::R),
            "c" => Ok(Self::C),
            "e" => Ok(Self::E),
            other => Err(Error::invalid(format!(
                "unknown reconstruction mode {other:?} (expected polar, r, c or e)"
            ))),
        }
    }
}

/// Below this the pair is rescaled before normalizing so subnormals keep full precision.
const RESCALE_BELOW: f64 = 1e-290;
const RESCALE: f64 = 1.157_920_892_373_162e77; // 2^256

/// Projects one `(pr, pi)` pair onto the unit circle; `(0, 0)` maps to `(1, 0)`.
#[inline]
pub fn triangle_correct_pair(pr: f64, pi: f64) -> (f64, f64) {
    let (mut pr, mut pi) = (pr, pi);
    let mut n = pr.hypot(pi);
    if n < RESCALE_BELOW {
        pr *= RESCALE;
        pi *= RESCALE;
        n = pr.hypot(pi);
    }
    if n == 0.0 || !n.is_finite() {
        return (1.0, 0.0);
    }
    (pr / n, pi / n)
}

pub fn triangle_correct(pr: &Matrix, pi: &Matrix) -> Result<(Matrix, Matrix)> {
    if pr.dims() != pi.dims() {
        return Err(Error::shape(
            "triangle_correct",
            format!("{:?} vs {:?}", pr.dims(), pi.dims()),
        ));
    }
    let (rows, cols) = pr.dims();
    let mut tr = Matrix::zeros(rows, cols);
    let mut ti = Matrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let (a, b) = triangle_correct_pair(pr.as_slice()[i], pi.as_slice()[i]);
        tr.as_mut_slice()[i] = a;
        ti.as_mut_slice()[i] = b;
    }
    Ok((tr, ti))
}

/// Gradient of [`triangle_correct_pair`] pulled back to its inputs.
#[inline]
fn triangle_correct_backward(pr: f64, pi: f64, dtr: f64, dti: f64) -> (f64, f64) {
    let n = pr.hypot(pi);
    if n == 0.0 || !n.is_finite() {
        return (0.0, 0.0);
    }
    let (tr, ti) = (pr / n, pi / n);
    // d(p/|p|) = (I - t t^T) / |p|
    let proj = tr * dtr + ti * dti;
    ((dtr - tr * proj) / n, (dti - ti * proj) / n)
}

/// Rotates `(cos_x, sin_x)` by the corrected phase pair.
#[inline]
pub fn rotate_phase(tcpr: f64, tcpi: f64, cos_x: f64, sin_x: f64) -> (f64, f64) {
    (tcpr * cos_x - tcpi * sin_x, tcpr * sin_x + tcpi * cos_x)
}

/// Applies the magnitude mask and corrected phase rotation to `x`.
///
/// `|S| cos(theta_S) = m |X| (tr cos(theta_X) - ti sin(theta_X))` is evaluated
/// with `|X| cos(theta_X)` folded back into `X_r` (likewise for the imaginary
/// part), which makes the identity mask reproduce `x` bit for bit.
pub fn reconstruct_polar(mask: &MaskTriple, x: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    mask.check(x)?;
    let mut out = ComplexSpectrogram::zeros(x.frames(), x.config);
    let n = x.frames() * x.bins();
    let (xr, xi) = (x.real.as_slice(), x.imag.as_slice());
    for i in 0..n {
        let (re, im) = polar_bin(
            mask.mag_mask.as_slice()[i],
            mask.cirm_real.as_slice()[i],
            mask.cirm_imag.as_slice()[i],
            xr[i],
            xi[i],
        );
        out.real.as_mut_slice()[i] = re;
        out.imag.as_mut_slice()[i] = im;
    }
    Ok(out)
}

/// Polar reconstruction of a single bin.
#[inline]
pub fn polar_bin(mag: f64, pr: f64, pi: f64, xr: f64, xi: f64) -> (f64, f64) {
    let (tr, ti) = triangle_correct_pair(pr, pi);
    let (re, im) = rotate_phase(tr, ti, xr, xi);
    (mag * re, mag * im)
}

/// Pulls a spectrum gradient back to the three mask planes.
pub fn reconstruct_polar_backward(
    mask: &MaskTriple,
    x: &ComplexSpectrogram,
    grad: &ComplexSpectrogram,
) -> Result<MaskTriple> {
    mask.check(x)?;
    if !grad.same_shape(x) {
        return Err(Error::shape("reconstruct_polar backward", "gradient shape differs from spectrum"));
    }
    let (rows, cols) = x.real.dims();
    let mut out = MaskTriple {
        mag_mask: Matrix::zeros(rows, cols),
        cirm_real: Matrix::zeros(rows, cols),
        cirm_imag: Matrix::zeros(rows, cols),
    };
    let (xr, xi) = (x.real.as_slice(), x.imag.as_slice());
    for i in 0..rows * cols {
        let m = mask.mag_mask.as_slice()[i];
        let (pr, pi) = (mask.cirm_real.as_slice()[i], mask.cirm_imag.as_slice()[i]);
        let (tr, ti) = triangle_correct_pair(pr, pi);
        let (gr, gi) = (grad.real.as_slice()[i], grad.imag.as_slice()[i]);
        let (re, im) = rotate_phase(tr, ti, xr[i], xi[i]);
        out.mag_mask.as_mut_slice()[i] = gr * re + gi * im;
        let dtr = m * (gr * xr[i] + gi * xi[i]);
        let dti = m * (gi * xr[i] - gr * xi[i]);
        let (dpr, dpi) = triangle_correct_backward(pr, pi, dtr, dti);
        out.cirm_real.as_mut_slice()[i] = dpr;
        out.cirm_imag.as_mut_slice()[i] = dpi;
    }
    Ok(out)
}

/// Cartesian reconstruction of a single bin.
#[inline]
pub fn cartesian_bin(mode: ReconstructionMode, mr: f64, mi: f64, xr: f64, xi: f64) -> (f64, f64) {
    match mode {
        ReconstructionMode::R => (mr * xr, mi * xi),
        ReconstructionMode::C | ReconstructionMode::Polar => (mr * xr - mi * xi, mr * xi + mi * xr),
        ReconstructionMode::E => {
            let amp = xr.hypot(xi) * mr.hypot(mi);
            let psi = xi.atan2(xr) + mi.atan2(mr);
            (amp * psi.cos(), amp * psi.sin())
        }
    }
}

/// `R`, `C` or `E` reconstruction; `Polar` is rejected here.
pub fn reconstruct_cartesian(
    mode: ReconstructionMode,
    mask: &CartesianMask,
    x: &ComplexSpectrogram,
) -> Result<ComplexSpectrogram> {
    if mode.is_polar() {
        return Err(Error::Usage("polar reconstruction takes a MaskTriple".into()));
    }
    mask.check(x)?;
    let mut out = ComplexSpectrogram::zeros(x.frames(), x.config);
    for i in 0..x.frames() * x.bins() {
        let (re, im) = cartesian_bin(
            mode,
            mask.real.as_slice()[i],
            mask.imag.as_slice()[i],
            x.real.as_slice()[i],
            x.imag.as_slice()[i],
        );
        out.real.as_mut_slice()[i] = re;
        out.imag.as_mut_slice()[i] = im;
    }
    Ok(out)
}

pub fn reconstruct_cartesian_backward(
    mode: ReconstructionMode,
    mask: &CartesianMask,
    x: &ComplexSpectrogram,
    grad: &ComplexSpectrogram,
) -> Result<CartesianMask> {
    if mode.is_polar() {
        return Err(Error::Usage("polar reconstruction takes a MaskTriple".into()));
    }
    mask.check(x)?;
    if !grad.same_shape(x) {
        return Err(Error::shape("reconstruct_cartesian backward", "gradient shape differs from spectrum"));
    }
    let (rows, cols) = x.real.dims();
    let mut out = CartesianMask {
        real: Matrix::zeros(rows, cols),
        imag: Matrix::zeros(rows, cols),
    };
    for i in 0..rows * cols {
        let (mr, mi) = (mask.real.as_slice()[i], mask.imag.as_slice()[i]);
        let (xr, xi) = (x.real.as_slice()[i], x.imag.as_slice()[i]);
        let (gr, gi) = (grad.real.as_slice()[i], grad.imag.as_slice()[i]);
        let (dmr, dmi) = match mode {
            ReconstructionMode::R => (gr * xr, gi * xi),
            ReconstructionMode::C | ReconstructionMode::Polar => {
                (gr * xr + gi * xi, gi * xr - gr * xi)
            }
            ReconstructionMode::E => {
                let rho = mr.hypot(mi);
                if rho == 0.0 {
                    (0.0, 0.0)
                } else {
                    let mag_x = xr.hypot(xi);
                    let psi = xi.atan2(xr) + mi.atan2(mr);
                    let (c, s) = (psi.cos(), psi.sin());
                    let d_amp = gr * c + gi * s;
                    let d_psi = mag_x * rho * (gi * c - gr * s);
                    let rho2 = rho * rho;
                    (
                        mag_x * d_amp * mr / rho - d_psi * mi / rho2,
                        mag_x * d_amp * mi / rho + d_psi * mr / rho2,
                    )
                }
            }
        };
        out.real.as_mut_slice()[i] = dmr;
        out.imag.as_mut_slice()[i] = dmi;
    }
    Ok(out)
}
