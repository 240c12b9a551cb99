//! Central finite-difference verification of every hand-written backward pass.
//!
//! Each case projects a layer's output onto a fixed random tensor to obtain a
//! scalar, then compares analytic gradients for the input and every trainable
//! parameter against `(L(v + h) - L(v - h)) / 2h` in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{ComplexSpectrogram, Matrix, StftConfig, WindowKind};
use crate::error::Result;
use crate::loss::{loss_total, loss_total_with_grad, LossWeights};
use crate::nn::gru::GruState;
use crate::nn::params::ParamBuilder;
use crate::nn::{BatchNorm2d, BiGru, Conv2dCausal, ConvSpec, FeatureTensor, Gru, LayerNorm, ModelParams, Prelu, TConv2dCausal};
use crate::recon::{reconstruct_polar, reconstruct_polar_backward, MaskTriple};

pub const STEP: f64 = 1e-4;
pub const THRESHOLD: f64 = 1e-4;

/// Worst relative error for one tensor of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub layer: &'static str,
    pub shape: String,
    pub tensor: String,
    pub max_rel_err: f64,
}

impl GradcheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_err < THRESHOLD
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(GradcheckEntry::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradcheckEntry> {
        self.entries.iter().filter(|e| !e.passed())
    }

    /// Layer names in the order they were checked.
    pub fn layers(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.layer) {
                out.push(e.layer);
            }
        }
        out
    }

    /// Worst error per layer.
    pub fn worst_by_layer(&self) -> Vec<(&'static str, f64)> {
        self.layers()
            .into_iter()
            .map(|l| {
                let worst = self
                    .entries
                    .iter()
                    .filter(|e| e.layer == l)
                    .map(|e| e.max_rel_err)
                    .fold(0.0, f64::max);
                (l, worst)
            })
            .collect()
    }
}

/// `max |a - n| / max(max |a|, max |n|, 1e-10)`
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(1e-10, f64::max);
    diff / scale
}

fn central_difference(v: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let orig = v[i];
    v[i] = orig + STEP;
    let up = f(v)?;
    v[i] = orig - STEP;
    let down = f(v)?;
    v[i] = orig;
    Ok((up - down) / (2.0 * STEP))
}

struct Case<'a> {
    layer: &'static str,
    shape: String,
    params: ModelParams<f64>,
    input: Vec<f64>,
    loss: Box<dyn Fn(&mut ModelParams<f64>, &[f64]) -> Result<f64> + 'a>,
    /// Accumulates parameter gradients and returns the input gradient.
    grad: Box<dyn Fn(&mut ModelParams<f64>, &[f64]) -> Result<Vec<f64>> + 'a>,
}

impl Case<'_> {
    fn run(mut self) -> Result<Vec<GradcheckEntry>> {
        self.params.zero_grad();
        let dx = (self.grad)(&mut self.params, &self.input)?;
        let mut entries = Vec::new();

        let mut x = self.input.clone();
        let mut numeric = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            numeric.push(central_difference(&mut x, i, |v| (self.loss)(&mut self.params, v))?);
        }
        entries.push(self.entry("input".to_string(), relative_error(&dx, &numeric)));

        for k in 0..self.params.len() {
            let e = &self.params.entries()[k];
            if !e.trainable {
                continue;
            }
            let (name, analytic) = (e.name.clone(), e.grad.clone());
            let mut numeric = Vec::with_capacity(analytic.len());
            for i in 0..analytic.len() {
                let mut values = self.params.entries()[k].value.clone();
                let d = central_difference(&mut values, i, |v| {
                    self.params.entries_mut()[k].value.copy_from_slice(v);
                    (self.loss)(&mut self.params, &self.input)
                })?;
                self.params.entries_mut()[k].value.copy_from_slice(&values);
                numeric.push(d);
            }
            entries.push(self.entry(name, relative_error(&analytic, &numeric)));
        }
        Ok(entries)
    }

    fn entry(&self, tensor: String, max_rel_err: f64) -> GradcheckEntry {
        GradcheckEntry {
            layer: self.layer,
            shape: self.shape.clone(),
            tensor,
            max_rel_err,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values in `[-1, -0.05] ∪ [0.05, 1]`, clear of the PReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn randomize_params(p: &mut ModelParams<f64>, rng: &mut ChaCha8Rng) {
    for e in p.entries_mut().iter_mut().filter(|e| e.trainable) {
        e.value.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
}

fn project(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn tensor(shape: [usize; 4], v: &[f64]) -> Result<FeatureTensor<f64>> {
    let mut t = FeatureTensor::zeros(shape[0], shape[1], shape[2], shape[3]);
    t.as_mut_slice().copy_from_slice(v);
    Ok(t)
}

fn conv_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [(1, 2, 1, 3, 9), (2, 3, 2, 4, 11), (3, 2, 1, 5, 17)];
    let mut cases = Vec::new();
    for (ci, co, b, t, f) in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let conv = Conv2dCausal::new(ConvSpec::encoder(ci, co), &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let xs = [b, ci, t, f];
        let r = uniform(rng, b * co * t * conv.out_freq(f), -1.0, 1.0);
        let (c1, r1) = (conv.clone(), r.clone());
        cases.push(Case {
            layer: "conv2d_causal",
            shape: format!("in {ci} out {co} x {xs:?}"),
            params,
            input: uniform(rng, xs.iter().product(), -1.0, 1.0),
            loss: Box::new(move |p, x| Ok(project(c1.forward(p, &tensor(xs, x)?)?.as_slice(), &r1))),
            grad: Box::new(move |p, x| {
                let x = tensor(xs, x)?;
                let y = conv.forward(p, &x)?;
                let g = tensor(y.shape(), &r)?;
                Ok(conv.backward(p, &x, &g)?.as_slice().to_vec())
            }),
        });
    }
    Ok(cases)
}

fn tconv_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [(2, 1, 1, 3, 5), (3, 2, 2, 4, 9), (2, 3, 1, 5, 3)];
    let mut cases = Vec::new();
    for (ci, co, b, t, f) in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let tconv = TConv2dCausal::new(ConvSpec::encoder(ci, co), &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let f_out = tconv.mirrored_freq(f);
        let xs = [b, ci, t, f];
        let r = uniform(rng, b * co * t * f_out, -1.0, 1.0);
        let (c1, r1) = (tconv.clone(), r.clone());
        cases.push(Case {
            layer: "tconv2d_causal",
            shape: format!("in {ci} out {co} x {xs:?} -> {f_out} bins"),
            params,
            input: uniform(rng, xs.iter().product(), -1.0, 1.0),
            loss: Box::new(move |p, x| Ok(project(c1.forward(p, &tensor(xs, x)?, f_out)?.as_slice(), &r1))),
            grad: Box::new(move |p, x| {
                let x = tensor(xs, x)?;
                let y = tconv.forward(p, &x, f_out)?;
                let g = tensor(y.shape(), &r)?;
                Ok(tconv.backward(p, &x, &g)?.as_slice().to_vec())
            }),
        });
    }
    Ok(cases)
}

fn batchnorm_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [[2, 2, 3, 5], [1, 3, 4, 6], [2, 4, 2, 3]];
    let mut cases = Vec::new();
    for xs in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let bn = BatchNorm2d::new(xs[1], &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let r = uniform(rng, xs.iter().product(), -1.0, 1.0);
        let (b1, r1) = (bn.clone(), r.clone());
        cases.push(Case {
            layer: "batchnorm2d",
            shape: format!("{xs:?}"),
            params,
            input: uniform(rng, xs.iter().product(), -1.0, 1.0),
            loss: Box::new(move |p, x| Ok(project(b1.forward_train(p, &tensor(xs, x)?)?.0.as_slice(), &r1))),
            grad: Box::new(move |p, x| {
                let (_, cache) = bn.forward_train(p, &tensor(xs, x)?)?;
                Ok(bn.backward(p, &cache, &tensor(xs, &r)?)?.as_slice().to_vec())
            }),
        });
    }
    Ok(cases)
}

fn layernorm_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [[1, 3, 2, 4], [2, 5, 3, 3], [1, 8, 4, 2]];
    let mut cases = Vec::new();
    for xs in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let ln = LayerNorm::new(xs[1], &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let r = uniform(rng, xs.iter().product(), -1.0, 1.0);
        let (l1, r1) = (ln.clone(), r.clone());
        cases.push(Case {
            layer: "layernorm",
            shape: format!("{xs:?}"),
            params,
            input: uniform(rng, xs.iter().product(), -1.0, 1.0),
            loss: Box::new(move |p, x| Ok(project(l1.forward(p, &tensor(xs, x)?)?.0.as_slice(), &r1))),
            grad: Box::new(move |p, x| {
                let (_, cache) = ln.forward(p, &tensor(xs, x)?)?;
                Ok(ln.backward(p, &cache, &tensor(xs, &r)?)?.as_slice().to_vec())
            }),
        });
    }
    Ok(cases)
}

fn prelu_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [[1, 2, 3, 4], [2, 3, 2, 5], [1, 4, 4, 3]];
    let mut cases = Vec::new();
    for xs in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let act = Prelu::new(xs[1], &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let r = uniform(rng, xs.iter().product(), -1.0, 1.0);
        let (a1, r1) = (act.clone(), r.clone());
        cases.push(Case {
            layer: "prelu",
            shape: format!("{xs:?}"),
            params,
            input: away_from_zero(rng, xs.iter().product()),
            loss: Box::new(move |p, x| Ok(project(a1.forward(p, &tensor(xs, x)?)?.as_slice(), &r1))),
            grad: Box::new(move |p, x| Ok(act.backward(p, &tensor(xs, x)?, &tensor(xs, &r)?)?.as_slice().to_vec())),
        });
    }
    Ok(cases)
}

/// The input vector carries the sequence followed by the initial state.
fn gru_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [(3, 4, 1, 5), (2, 3, 3, 4), (5, 6, 2, 3)];
    let mut cases = Vec::new();
    for (inp, hu, lanes, steps) in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let gru = Gru::new(inp, hu, &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let n_x = lanes * steps * inp;
        let r = uniform(rng, lanes * steps * hu, -1.0, 1.0);
        let split = move |v: &[f64]| -> (Vec<f64>, GruState<f64>) {
            let mut h0 = GruState::zeros(lanes, hu);
            for l in 0..lanes {
                h0.lane_mut(l).copy_from_slice(&v[n_x + l * hu..n_x + (l + 1) * hu]);
            }
            (v[..n_x].to_vec(), h0)
        };
        let (g1, r1) = (gru.clone(), r.clone());
        cases.push(Case {
            layer: "gru",
            shape: format!("input {inp} hidden {hu} lanes {lanes} steps {steps}"),
            params,
            input: uniform(rng, n_x + lanes * hu, -1.0, 1.0),
            loss: Box::new(move |p, v| {
                let (x, h0) = split(v);
                let (y, _, _) = g1.forward(p, &x, lanes, steps, &h0, false)?;
                Ok(project(&y, &r1))
            }),
            grad: Box::new(move |p, v| {
                let (x, h0) = split(v);
                let (_, _, cache) = gru.forward(p, &x, lanes, steps, &h0, true)?;
                let cache = cache.expect("recorded forward");
                let (mut dx, dh0) = gru.backward(p, &x, &cache, &r)?;
                for l in 0..lanes {
                    dx.extend_from_slice(dh0.lane(l));
                }
                Ok(dx)
            }),
        });
    }
    Ok(cases)
}

fn bigru_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [(3, 4, 1, 5), (2, 3, 3, 4), (4, 2, 2, 6)];
    let mut cases = Vec::new();
    for (inp, hu, lanes, steps) in shapes {
        let mut pb = ParamBuilder::new(rng.random());
        let gru = BiGru::new(inp, hu, &mut pb)?;
        let mut params = pb.finish();
        randomize_params(&mut params, rng);
        let r = uniform(rng, lanes * steps * hu, -1.0, 1.0);
        let (g1, r1) = (gru.clone(), r.clone());
        cases.push(Case {
            layer: "bigru",
            shape: format!("input {inp} hidden {hu} lanes {lanes} steps {steps}"),
            params,
            input: uniform(rng, lanes * steps * inp, -1.0, 1.0),
            loss: Box::new(move |p, x| Ok(project(&g1.forward(p, x, lanes, steps, false)?.0, &r1))),
            grad: Box::new(move |p, x| {
                let (_, cache) = gru.forward(p, x, lanes, steps, true)?;
                gru.backward(p, x, &cache.expect("recorded forward"), &r)
            }),
        });
    }
    Ok(cases)
}

fn random_spectrum(rng: &mut ChaCha8Rng, frames: usize, cfg: StftConfig) -> ComplexSpectrogram {
    let mut s = ComplexSpectrogram::zeros(frames, cfg);
    for v in s.real.as_mut_slice().iter_mut().chain(s.imag.as_mut_slice()) {
        *v = rng.random_range(-2.0..2.0);
    }
    s
}

/// Mask planes `[magnitude, cos, sin]` concatenated into one input vector.
fn loss_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case<'static>>> {
    let shapes = [(1, 16, (1.0, 1.0)), (2, 32, (1.0, 0.0)), (3, 8, (0.5, 2.0))];
    let mut cases = Vec::new();
    for (frames, fft, (am, ari)) in shapes {
        let cfg = StftConfig {
            win_len: fft,
            hop: fft / 4,
            fft_size: fft,
            window: WindowKind::Hamming,
        };
        let weights = LossWeights::new(am, ari)?;
        let x = random_spectrum(rng, frames, cfg);
        let target = random_spectrum(rng, frames, cfg);
        let n = frames * cfg.bins();
        let mut input = uniform(rng, n, 0.05, 1.0);
        input.extend(away_from_zero(rng, 2 * n));
        let unpack = move |v: &[f64]| -> Result<MaskTriple> {
            let plane = |k: usize| Matrix::from_vec(frames, n / frames, v[k * n..(k + 1) * n].to_vec());
            Ok(MaskTriple {
                mag_mask: plane(0)?,
                cirm_real: plane(1)?,
                cirm_imag: plane(2)?,
            })
        };
        let (x1, t1) = (x.clone(), target.clone());
        cases.push(Case {
            layer: "loss_total(reconstruct_polar)",
            shape: format!("{frames} frames x {} bins, weights ({am}, {ari})", cfg.bins()),
            params: ModelParams::new(),
            input,
            loss: Box::new(move |_, v| loss_total(&reconstruct_polar(&unpack(v)?, &x1)?, &t1, weights)),
            grad: Box::new(move |_, v| {
                let mask = unpack(v)?;
                let est = reconstruct_polar(&mask, &x)?;
                let (_, g) = loss_total_with_grad(&est, &target, weights)?;
                let d = reconstruct_polar_backward(&mask, &x, &g)?;
                Ok([d.mag_mask, d.cirm_real, d.cirm_imag]
                    .into_iter()
                    .flat_map(Matrix::into_vec)
                    .collect())
            }),
        });
    }
    Ok(cases)
}

/// Runs the whole suite: three shapes for each layer type plus the loss chain.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let builders: [fn(&mut ChaCha8Rng) -> Result<Vec<Case<'static>>>; 8] = [
        conv_cases,
        tconv_cases,
        batchnorm_cases,
        layernorm_cases,
        prelu_cases,
        gru_cases,
        bigru_cases,
        loss_cases,
    ];
    let mut report = GradcheckReport::default();
    for build in builders {
        for case in build(&mut rng)? {
            report.entries.extend(case.run()?);
        }
    }
    Ok(report)
}
