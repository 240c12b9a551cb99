//! Gated recurrent unit and its bidirectional (direction-summed) variant.
//!
//! Gate order inside the stacked `3H` matrices is reset, update, candidate:
//!
//! ```text
//! r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//! z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```
//!
//! Sequences are passed as `lanes x steps x width` slices: every lane is an
//! independent sequence sharing the same weights.

use crate::error::{Error, Result};
use crate::nn::params::ParamBuilder;
use crate::nn::{axpy, dot, dot4, sigmoid, ModelParams, ParamId, Real};

/// Hidden state for a set of independent lanes, `lanes x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState<T> {
    pub lanes: usize,
    pub hidden_units: usize,
    pub hidden: Vec<T>,
}

impl<T: Real> GruState<T> {
    pub fn zeros(lanes: usize, hidden_units: usize) -> Self {
        Self {
            lanes,
            hidden_units,
            hidden: vec![T::zero(); lanes * hidden_units],
        }
    }

    pub fn lane(&self, l: usize) -> &[T] {
        &self.hidden[l * self.hidden_units..(l + 1) * self.hidden_units]
    }

    pub fn lane_mut(&mut self, l: usize) -> &mut [T] {
        &mut self.hidden[l * self.hidden_units..(l + 1) * self.hidden_units]
    }
}

#[derive(Debug, Clone)]
pub struct Gru {
    pub input_size: usize,
    pub hidden: usize,
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    lanes: usize,
    steps: usize,
    h_prev: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    gh_n: Vec<T>,
}

/// Scratch for one recurrence step.
#[derive(Debug, Clone, Default)]
pub struct GruScratch<T> {
    gi: Vec<T>,
    gh: Vec<T>,
}

impl Gru {
    pub fn new<T: Real>(input_size: usize, hidden: usize, b: &mut ParamBuilder<T>) -> Result<Self> {
        if input_size == 0 || hidden == 0 {
            return Err(Error::invalid("GRU sizes must be positive"));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            input_size,
            hidden,
            w_ih: b.uniform("w_ih", &[3 * hidden, input_size], bound)?,
            w_hh: b.uniform("w_hh", &[3 * hidden, hidden], bound)?,
            b_ih: b.constant("b_ih", &[3 * hidden], 0.0)?,
            b_hh: b.constant("b_hh", &[3 * hidden], 0.0)?,
        })
    }

    pub fn num_params(input_size: usize, hidden: usize) -> usize {
        3 * hidden * (input_size + hidden + 2)
    }

    /// Advances one lane by one step in place; gate activations are left in the scratch.
    #[inline]
    pub fn step<T: Real>(&self, p: &ModelParams<T>, x: &[T], h: &mut [T], s: &mut GruScratch<T>) {
        let hu = self.hidden;
        let (w_ih, w_hh) = (p.value(self.w_ih), p.value(self.w_hh));
        let (b_ih, b_hh) = (p.value(self.b_ih), p.value(self.b_hh));
        s.gi.resize(3 * hu, T::zero());
        s.gh.resize(3 * hu, T::zero());
        affine(w_ih, b_ih, x, &mut s.gi);
        affine(w_hh, b_hh, h, &mut s.gh);
        for j in 0..hu {
            let r = sigmoid(s.gi[j] + s.gh[j]);
            let z = sigmoid(s.gi[hu + j] + s.gh[hu + j]);
            let n = (s.gi[2 * hu + j] + r * s.gh[2 * hu + j]).tanh();
            // stash gate values for the caller; gi no longer needed for this j
            s.gi[j] = r;
            s.gi[hu + j] = z;
            s.gi[2 * hu + j] = n;
        }
        for j in 0..hu {
            let z = s.gi[hu + j];
            h[j] = (T::one() - z) * s.gi[2 * hu + j] + z * h[j];
        }
    }

    fn check<T: Real>(&self, x: &[T], lanes: usize, steps: usize, h0: &GruState<T>) -> Result<()> {
        if x.len() != lanes * steps * self.input_size {
            return Err(Error::shape(
                "gru",
                format!(
                    "{} inputs for {lanes} lanes x {steps} steps x width {}",
                    x.len(),
                    self.input_size
                ),
            ));
        }
        if h0.lanes != lanes || h0.hidden_units != self.hidden {
            return Err(Error::shape(
                "gru",
                format!(
                    "state is {}x{}, expected {lanes}x{}",
                    h0.lanes, h0.hidden_units, self.hidden
                ),
            ));
        }
        Ok(())
    }

    /// Runs all lanes over `steps` steps; optionally records activations.
    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        x: &[T],
        lanes: usize,
        steps: usize,
        h0: &GruState<T>,
        record: bool,
    ) -> Result<(Vec<T>, GruState<T>, Option<GruCache<T>>)> {
        self.check(x, lanes, steps, h0)?;
        let hu = self.hidden;
        let mut out = vec![T::zero(); lanes * steps * hu];
        let mut state = h0.clone();
        let mut cache = record.then(|| GruCache {
            lanes,
            steps,
            h_prev: Vec::with_capacity(lanes * steps * hu),
            r: Vec::with_capacity(lanes * steps * hu),
            z: Vec::with_capacity(lanes * steps * hu),
            n: Vec::with_capacity(lanes * steps * hu),
            gh_n: Vec::with_capacity(lanes * steps * hu),
        });
        let mut s = GruScratch::default();
        for l in 0..lanes {
            for t in 0..steps {
                let xi = &x[(l * steps + t) * self.input_size..(l * steps + t + 1) * self.input_size];
                let h = state.lane_mut(l);
                if let Some(c) = cache.as_mut() {
                    c.h_prev.extend_from_slice(h);
                }
                self.step(p, xi, h, &mut s);
                if let Some(c) = cache.as_mut() {
                    c.r.extend_from_slice(&s.gi[..hu]);
                    c.z.extend_from_slice(&s.gi[hu..2 * hu]);
                    c.n.extend_from_slice(&s.gi[2 * hu..]);
                    c.gh_n.extend_from_slice(&s.gh[2 * hu..]);
                }
                out[(l * steps + t) * hu..(l * steps + t + 1) * hu].copy_from_slice(h);
            }
        }
        Ok((out, state, cache))
    }

    /// Backpropagation through time. `grad_out` is `lanes x steps x hidden`;
    /// returns input gradients and the gradient with respect to the initial state.
    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &[T],
        cache: &GruCache<T>,
        grad_out: &[T],
    ) -> Result<(Vec<T>, GruState<T>)> {
        let (lanes, steps, hu, inp) = (cache.lanes, cache.steps, self.hidden, self.input_size);
        if grad_out.len() != lanes * steps * hu || x.len() != lanes * steps * inp {
            return Err(Error::shape("gru backward", "gradient does not match recorded forward"));
        }
        let mut dx = vec![T::zero(); lanes * steps * inp];
        let mut dh0 = GruState::zeros(lanes, hu);
        let mut dgi = vec![T::zero(); 3 * hu];
        let mut dgh = vec![T::zero(); 3 * hu];
        let mut db_ih = vec![T::zero(); 3 * hu];
        let mut db_hh = vec![T::zero(); 3 * hu];
        for l in 0..lanes {
            let mut dh = vec![T::zero(); hu];
            for t in (0..steps).rev() {
                let k = (l * steps + t) * hu;
                for (d, g) in dh.iter_mut().zip(&grad_out[k..k + hu]) {
                    *d += *g;
                }
                let hp = &cache.h_prev[k..k + hu];
                let mut dh_prev = vec![T::zero(); hu];
                for j in 0..hu {
                    let (r, z, n, ghn) = (cache.r[k + j], cache.z[k + j], cache.n[k + j], cache.gh_n[k + j]);
                    let dn = dh[j] * (T::one() - z);
                    let dz = dh[j] * (hp[j] - n);
                    dh_prev[j] = dh[j] * z;
                    let da_n = dn * (T::one() - n * n);
                    let dr = da_n * ghn;
                    let da_z = dz * z * (T::one() - z);
                    let da_r = dr * r * (T::one() - r);
                    dgi[j] = da_r;
                    dgi[hu + j] = da_z;
                    dgi[2 * hu + j] = da_n;
                    dgh[j] = da_r;
                    dgh[hu + j] = da_z;
                    dgh[2 * hu + j] = da_n * r;
                }
                let xi = &x[(l * steps + t) * inp..(l * steps + t + 1) * inp];
                let dxi = &mut dx[(l * steps + t) * inp..(l * steps + t + 1) * inp];
                {
                    let (w_ih, dw_ih) = p.value_and_grad(self.w_ih);
                    for g in 0..3 * hu {
                        if dgi[g] != T::zero() {
                            axpy(dgi[g], xi, &mut dw_ih[g * inp..(g + 1) * inp]);
                            axpy(dgi[g], &w_ih[g * inp..(g + 1) * inp], dxi);
                        }
                        db_ih[g] += dgi[g];
                    }
                }
                {
                    let (w_hh, dw_hh) = p.value_and_grad(self.w_hh);
                    for g in 0..3 * hu {
                        if dgh[g] != T::zero() {
                            axpy(dgh[g], hp, &mut dw_hh[g * hu..(g + 1) * hu]);
                            axpy(dgh[g], &w_hh[g * hu..(g + 1) * hu], &mut dh_prev);
                        }
                        db_hh[g] += dgh[g];
                    }
                }
                dh = dh_prev;
            }
            dh0.lane_mut(l).copy_from_slice(&dh);
        }
        for (g, d) in p.grad_mut(self.b_ih).iter_mut().zip(&db_ih) {
            *g += *d;
        }
        for (g, d) in p.grad_mut(self.b_hh).iter_mut().zip(&db_hh) {
            *g += *d;
        }
        Ok((dx, dh0))
    }
}

/// Two GRUs run in opposite directions over each lane with outputs summed.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub forward_dir: Gru,
    pub backward_dir: Gru,
}

#[derive(Debug, Clone)]
pub struct BiGruCache<T> {
    fwd: GruCache<T>,
    bwd: GruCache<T>,
    reversed_input: Vec<T>,
}

/// Reverses the step order within each lane.
fn reverse_steps<T: Real>(x: &[T], lanes: usize, steps: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for l in 0..lanes {
        for t in (0..steps).rev() {
            out.extend_from_slice(&x[(l * steps + t) * width..(l * steps + t + 1) * width]);
        }
    }
    out
}

impl BiGru {
    pub fn new<T: Real>(input_size: usize, hidden: usize, b: &mut ParamBuilder<T>) -> Result<Self> {
        b.push_scope("fwd");
        let forward_dir = Gru::new(input_size, hidden, b)?;
        b.pop_scope();
        b.push_scope("bwd");
        let backward_dir = Gru::new(input_size, hidden, b)?;
        b.pop_scope();
        Ok(Self {
            forward_dir,
            backward_dir,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward_dir.hidden
    }

    /// Both directions start from a zero state in every lane.
    pub fn forward<T: Real>(
        &self,
        p: &ModelParams<T>,
        x: &[T],
        lanes: usize,
        steps: usize,
        record: bool,
    ) -> Result<(Vec<T>, Option<BiGruCache<T>>)> {
        let hu = self.hidden();
        let h0 = GruState::zeros(lanes, hu);
        let (mut out, _, fwd) = self.forward_dir.forward(p, x, lanes, steps, &h0, record)?;
        let xr = reverse_steps(x, lanes, steps, self.forward_dir.input_size);
        let (back, _, bwd) = self.backward_dir.forward(p, &xr, lanes, steps, &h0, record)?;
        let back = reverse_steps(&back, lanes, steps, hu);
        for (o, b) in out.iter_mut().zip(&back) {
            *o += *b;
        }
        let cache = match (fwd, bwd) {
            (Some(fwd), Some(bwd)) => Some(BiGruCache {
                fwd,
                bwd,
                reversed_input: xr,
            }),
            _ => None,
        };
        Ok((out, cache))
    }

    pub fn backward<T: Real>(
        &self,
        p: &mut ModelParams<T>,
        x: &[T],
        cache: &BiGruCache<T>,
        grad_out: &[T],
    ) -> Result<Vec<T>> {
        let (lanes, steps) = (cache.fwd.lanes, cache.fwd.steps);
        let hu = self.hidden();
        let (mut dx, _) = self.forward_dir.backward(p, x, &cache.fwd, grad_out)?;
        let g_rev = reverse_steps(grad_out, lanes, steps, hu);
        let (dxr, _) = self.backward_dir.backward(p, &cache.reversed_input, &cache.bwd, &g_rev)?;
        let dxr = reverse_steps(&dxr, lanes, steps, self.forward_dir.input_size);
        for (a, b) in dx.iter_mut().zip(&dxr) {
            *a += *b;
        }
        Ok(dx)
    }
}

/// `out = bias + weight · x` with `weight` row-major `[out.len(), x.len()]`.
fn affine<T: Real>(weight: &[T], bias: &[T], x: &[T], out: &mut [T]) {
    let n = x.len();
    let rows = out.len();
    let mut g = 0;
    while g + 4 <= rows {
        let w = |i: usize| &weight[(g + i) * n..(g + i + 1) * n];
        let d = dot4(x, [w(0), w(1), w(2), w(3)]);
        for i in 0..4 {
            out[g + i] = bias[g + i] + d[i];
        }
        g += 4;
    }
    for g in g..rows {
        out[g] = bias[g] + dot(&weight[g * n..(g + 1) * n], x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Straight-line recurrence written from the gate equations, independent of the layer code.
    fn reference_gru(
        w_ih: &[f64],
        w_hh: &[f64],
        b_ih: &[f64],
        b_hh: &[f64],
        xs: &[Vec<f64>],
        hu: usize,
    ) -> Vec<Vec<f64>> {
        let inp = xs[0].len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0; hu];
        let mut outs = Vec::new();
        for x in xs {
            let lin = |w: &[f64], b: &[f64], v: &[f64], row: usize, width: usize| {
                b[row] + (0..width).map(|i| w[row * width + i] * v[i]).sum::<f64>()
            };
            let mut next = vec![0.0; hu];
            for j in 0..hu {
                let r = sig(lin(w_ih, b_ih, x, j, inp) + lin(w_hh, b_hh, &h, j, hu));
                let z = sig(lin(w_ih, b_ih, x, hu + j, inp) + lin(w_hh, b_hh, &h, hu + j, hu));
                let n = (lin(w_ih, b_ih, x, 2 * hu + j, inp) + r * lin(w_hh, b_hh, &h, 2 * hu + j, hu)).tanh();
                next[j] = (1.0 - z) * n + z * h[j];
            }
            h = next;
            outs.push(h.clone());
        }
        outs
    }

    fn randomized_gru(inp: usize, hu: usize, seed: u64) -> (Gru, ModelParams<f64>) {
        let mut b = ParamBuilder::<f64>::new(seed);
        let gru = Gru::new(inp, hu, &mut b).unwrap();
        let mut p = b.finish();
        let bi = rand_vec(3 * hu, seed + 100);
        let bh = rand_vec(3 * hu, seed + 200);
        p.value_mut(gru.b_ih).copy_from_slice(&bi);
        p.value_mut(gru.b_hh).copy_from_slice(&bh);
        (gru, p)
    }

    #[test]
    fn zero_fixed_point() {
        let mut b = ParamBuilder::<f64>::new(1);
        let gru = Gru::new(3, 4, &mut b).unwrap();
        let p = b.finish();
        let (out, state, _) = gru
            .forward(&p, &vec![0.0; 2 * 5 * 3], 2, 5, &GruState::zeros(2, 4), false)
            .unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(state.hidden.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_reference_recurrence() {
        let (inp, hu, steps) = (3, 5, 7);
        let (gru, p) = randomized_gru(inp, hu, 2);
        let x = rand_vec(steps * inp, 3);
        let (out, _, _) = gru.forward(&p, &x, 1, steps, &GruState::zeros(1, hu), false).unwrap();
        let xs: Vec<Vec<f64>> = x.chunks(inp).map(|c| c.to_vec()).collect();
        let oracle = reference_gru(p.value(gru.w_ih), p.value(gru.w_hh), p.value(gru.b_ih), p.value(gru.b_hh), &xs, hu);
        for (t, o) in oracle.iter().enumerate() {
            for j in 0..hu {
                assert!((out[t * hu + j] - o[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn carried_state_equals_whole_sequence() {
        let (inp, hu, steps) = (4, 3, 10);
        let (gru, p) = randomized_gru(inp, hu, 4);
        let x = rand_vec(steps * inp, 5);
        let (whole, last, _) = gru.forward(&p, &x, 1, steps, &GruState::zeros(1, hu), false).unwrap();
        let mut state = GruState::zeros(1, hu);
        for t in 0..steps {
            let (o, s, _) = gru
                .forward(&p, &x[t * inp..(t + 1) * inp], 1, 1, &state, false)
                .unwrap();
            assert_eq!(&o[..], &whole[t * hu..(t + 1) * hu]);
            state = s;
        }
        assert_eq!(state, last);
    }

    #[test]
    fn bigru_is_sum_of_two_directional_runs() {
        let (inp, hu, steps, lanes) = (3, 4, 6, 2);
        let mut b = ParamBuilder::<f64>::new(6);
        let bi = BiGru::new(inp, hu, &mut b).unwrap();
        let p = b.finish();
        let x = rand_vec(lanes * steps * inp, 7);
        let (out, _) = bi.forward(&p, &x, lanes, steps, false).unwrap();
        for l in 0..lanes {
            let lane_x: Vec<Vec<f64>> = x[l * steps * inp..(l + 1) * steps * inp]
                .chunks(inp)
                .map(|c| c.to_vec())
                .collect();
            let g = &bi.forward_dir;
            let fwd = reference_gru(p.value(g.w_ih), p.value(g.w_hh), p.value(g.b_ih), p.value(g.b_hh), &lane_x, hu);
            let rev: Vec<Vec<f64>> = lane_x.iter().rev().cloned().collect();
            let g = &bi.backward_dir;
            let mut bwd = reference_gru(p.value(g.w_ih), p.value(g.w_hh), p.value(g.b_ih), p.value(g.b_hh), &rev, hu);
            bwd.reverse();
            for t in 0..steps {
                for j in 0..hu {
                    let expect = fwd[t][j] + bwd[t][j];
                    assert!((out[(l * steps + t) * hu + j] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tied_bigru_preserves_palindromes() {
        let (inp, hu) = (2, 3);
        let mut b = ParamBuilder::<f64>::new(8);
        let bi = BiGru::new(inp, hu, &mut b).unwrap();
        let mut p = b.finish();
        for (src, dst) in [
            (bi.forward_dir.w_ih, bi.backward_dir.w_ih),
            (bi.forward_dir.w_hh, bi.backward_dir.w_hh),
        ] {
            let v = p.value(src).to_vec();
            p.value_mut(dst).copy_from_slice(&v);
        }
        let x = [0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.9, 0.1, 0.3, -0.2];
        let (out, _) = bi.forward(&p, &x, 1, 5, false).unwrap();
        for t in 0..5 {
            for j in 0..hu {
                assert!((out[t * hu + j] - out[(4 - t) * hu + j]).abs() < 1e-14);
            }
        }
        let (zeros, _) = bi.forward(&p, &[0.0; 10], 1, 5, false).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut b = ParamBuilder::<f64>::new(0);
        let gru = Gru::new(3, 2, &mut b).unwrap();
        let p = b.finish();
        assert!(matches!(
            gru.forward(&p, &[0.0; 4], 1, 1, &GruState::zeros(1, 2), false),
            Err(Error::Shape { .. })
        ));
    }
}
