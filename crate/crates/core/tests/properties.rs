use mpcrn::dsp::{self, ComplexSpectrogram, Matrix, StftConfig, Waveform};
use mpcrn::loss::{loss_mag, loss_ri, loss_total, LossWeights};
use mpcrn::metrics::si_sdr_slices;
use mpcrn::model::{ModelConfig, Mpcrn};
use mpcrn::nn::params::ParamBuilder;
use mpcrn::nn::{Conv2dCausal, ConvSpec, FeatureTensor, Gru, GruState, TConv2dCausal};
use mpcrn::recon::{
    cartesian_bin, polar_bin, reconstruct_polar, triangle_correct_pair, MaskTriple, ReconstructionMode,
};
use mpcrn::stream::Enhancer;
use proptest::prelude::*;

fn signal(len: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn wave(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples, dsp::SAMPLE_RATE).unwrap()
}

fn spectrum(frames: usize, seed: u64) -> ComplexSpectrogram {
    let cfg = StftConfig::default();
    let n = frames * cfg.bins();
    let v = signal(2 * n, seed);
    ComplexSpectrogram::from_parts(
        Matrix::from_vec(frames, cfg.bins(), v[..n].to_vec()).unwrap(),
        Matrix::from_vec(frames, cfg.bins(), v[n..].to_vec()).unwrap(),
        cfg,
    )
    .unwrap()
}

fn small_enhancer(seed: u64) -> Enhancer {
    let cfg = ModelConfig::with_channels(&[3, 4, 4, 4, 4], &[4, 4]);
    let (m, p) = Mpcrn::new::<f32>(&cfg, seed).unwrap();
    Enhancer::new(m, p, ReconstructionMode::Polar).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_round_trip_interior(hops in 8usize..40, seed in any::<u64>()) {
        let cfg = StftConfig::default();
        let len = hops * cfg.hop;
        let w = wave(signal(len, seed));
        let back = dsp::istft(&dsp::stft(&w, &cfg).unwrap()).unwrap();
        for n in cfg.win_len..len - cfg.win_len {
            prop_assert!((back.samples[n] - w.samples[n]).abs() < 1e-6);
        }
    }

    #[test]
    fn stft_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let cfg = StftConfig::default();
        let (x, y) = (signal(2048, seed), signal(2048, seed ^ 1));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (sx, sy) = (dsp::stft(&wave(x), &cfg).unwrap(), dsp::stft(&wave(y), &cfg).unwrap());
        let sm = dsp::stft(&wave(mix), &cfg).unwrap();
        for i in 0..sm.real.as_slice().len() {
            let re = a * sx.real.as_slice()[i] + b * sy.real.as_slice()[i];
            let im = a * sx.imag.as_slice()[i] + b * sy.imag.as_slice()[i];
            prop_assert!((sm.real.as_slice()[i] - re).abs() < 1e-9);
            prop_assert!((sm.imag.as_slice()[i] - im).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_components_are_unit(seed in any::<u64>()) {
        let (mag, c, s) = dsp::magnitude_phase(&spectrum(3, seed));
        for i in 0..mag.as_slice().len() {
            if mag.as_slice()[i] > dsp::PHASE_EPS {
                let u = c.as_slice()[i].powi(2) + s.as_slice()[i].powi(2);
                prop_assert!((u - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn triangle_correction_is_unit_modulus(
        r in prop_oneof![-1e3f64..1e3, -1e-300f64..1e-300, Just(0.0)],
        i in prop_oneof![-1e3f64..1e3, -1e-300f64..1e-300, Just(0.0)],
    ) {
        let (a, b) = triangle_correct_pair(r, i);
        prop_assert!((a.hypot(b) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn rotated_phase_stays_on_unit_circle(
        m in 0.0f64..2.0, pr in -1.0f64..1.0, pi in -1.0f64..1.0, xr in -5.0f64..5.0, xi in -5.0f64..5.0,
    ) {
        prop_assume!(xr.hypot(xi) > 1e-6 && m > 1e-6);
        let (re, im) = polar_bin(m, pr, pi, xr, xi);
        let mag = re.hypot(im);
        prop_assert!(((re / mag).powi(2) + (im / mag).powi(2) - 1.0).abs() < 1e-9);
        prop_assert!((mag - m * xr.hypot(xi)).abs() <= 1e-9 * (1.0 + mag));
    }

    #[test]
    fn global_phase_shift_rotates_output(seed in any::<u64>(), phi in -3.1f64..3.1) {
        let x = spectrum(2, seed);
        let (frames, bins) = x.real.dims();
        let planes = signal(3 * frames * bins, seed ^ 7);
        let n = frames * bins;
        let mask = MaskTriple {
            mag_mask: Matrix::from_vec(frames, bins, planes[..n].iter().map(|v| v.abs()).collect()).unwrap(),
            cirm_real: Matrix::from_vec(frames, bins, planes[n..2 * n].to_vec()).unwrap(),
            cirm_imag: Matrix::from_vec(frames, bins, planes[2 * n..].to_vec()).unwrap(),
        };
        let mut xs = x.clone();
        let (c, s) = (phi.cos(), phi.sin());
        for i in 0..n {
            let (r, im) = (x.real.as_slice()[i], x.imag.as_slice()[i]);
            xs.real.as_mut_slice()[i] = r * c - im * s;
            xs.imag.as_mut_slice()[i] = r * s + im * c;
        }
        let a = reconstruct_polar(&mask, &x).unwrap();
        let b = reconstruct_polar(&mask, &xs).unwrap();
        for i in 0..n {
            let (r, im) = (a.real.as_slice()[i], a.imag.as_slice()[i]);
            prop_assert!((b.real.as_slice()[i] - (r * c - im * s)).abs() < 1e-9);
            prop_assert!((b.imag.as_slice()[i] - (r * s + im * c)).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_mask_is_identity(seed in any::<u64>()) {
        let x = spectrum(3, seed);
        let (f, b) = x.real.dims();
        let y = reconstruct_polar(&MaskTriple::identity(f, b), &x).unwrap();
        prop_assert_eq!(y.real, x.real);
        prop_assert_eq!(y.imag, x.imag);
    }

    #[test]
    fn c_and_e_agree(mr in -3.0f64..3.0, mi in -3.0f64..3.0, xr in -3.0f64..3.0, xi in -3.0f64..3.0) {
        prop_assume!(mr.hypot(mi) > 1e-12);
        let (a, b) = cartesian_bin(ReconstructionMode::C, mr, mi, xr, xi);
        let (c, d) = cartesian_bin(ReconstructionMode::E, mr, mi, xr, xi);
        prop_assert!((a - c).abs() <= 1e-9 && (b - d).abs() <= 1e-9);
    }

    #[test]
    fn losses_non_negative_and_zero_on_equal(seed in any::<u64>()) {
        let (a, b) = (spectrum(2, seed), spectrum(2, seed ^ 3));
        let w = LossWeights::default();
        prop_assert!(loss_total(&a, &b, w).unwrap() > 0.0);
        prop_assert!(loss_total(&a, &a, w).unwrap() == 0.0);
    }

    #[test]
    fn loss_mag_ignores_estimate_phase(seed in any::<u64>(), phi in -3.1f64..3.1) {
        let (est, target) = (spectrum(2, seed), spectrum(2, seed ^ 5));
        let mut rot = est.clone();
        for i in 0..est.real.as_slice().len() {
            let (r, im) = (est.real.as_slice()[i], est.imag.as_slice()[i]);
            let p = phi * (1.0 + i as f64 * 0.01);
            rot.real.as_mut_slice()[i] = r * p.cos() - im * p.sin();
            rot.imag.as_mut_slice()[i] = r * p.sin() + im * p.cos();
        }
        let (a, b) = (loss_mag(&est, &target).unwrap(), loss_mag(&rot, &target).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_ri_swap_symmetry(seed in any::<u64>()) {
        let (a, b) = (spectrum(2, seed), spectrum(2, seed ^ 9));
        let swap = |s: &ComplexSpectrogram| ComplexSpectrogram::from_parts(s.imag.clone(), s.real.clone(), s.config).unwrap();
        let d = loss_ri(&a, &b).unwrap() - loss_ri(&swap(&a), &swap(&b)).unwrap();
        prop_assert!(d.abs() < 1e-12);
    }

    #[test]
    fn si_sdr_scale_invariant(seed in any::<u64>(), a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let r = signal(800, seed);
        let e: Vec<f64> = r.iter().zip(signal(800, seed ^ 11)).map(|(x, n)| x + 0.3 * n).collect();
        let scaled: Vec<f64> = e.iter().map(|v| a * v).collect();
        let d = si_sdr_slices(&scaled, &r).unwrap() - si_sdr_slices(&e, &r).unwrap();
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn si_sdr_permutation_covariant(seed in any::<u64>(), shift in 1usize..399) {
        let r = signal(400, seed);
        let e = signal(400, seed ^ 13);
        let perm = |v: &[f64]| { let mut p = v.to_vec(); p.rotate_left(shift); p.reverse(); p };
        let d = si_sdr_slices(&perm(&e), &perm(&r)).unwrap() - si_sdr_slices(&e, &r).unwrap();
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn gru_split_anywhere_equals_whole(split in 1usize..9, seed in any::<u64>()) {
        let mut b = ParamBuilder::<f64>::new(seed);
        let gru = Gru::new(3, 4, &mut b).unwrap();
        let p = b.finish();
        let x = signal(2 * 10 * 3, seed);
        let h0 = GruState::zeros(2, 4);
        let (whole, hw, _) = gru.forward(&p, &x, 2, 10, &h0, false).unwrap();
        let lane = |l: usize, a: usize, z: usize| x[(l * 10 + a) * 3..(l * 10 + z) * 3].to_vec();
        let first: Vec<f64> = [lane(0, 0, split), lane(1, 0, split)].concat();
        let rest: Vec<f64> = [lane(0, split, 10), lane(1, split, 10)].concat();
        let (y1, h1, _) = gru.forward(&p, &first, 2, split, &h0, false).unwrap();
        let (y2, h2, _) = gru.forward(&p, &rest, 2, 10 - split, &h1, false).unwrap();
        prop_assert_eq!(h2, hw);
        for l in 0..2 {
            let joined = [&y1[l * split * 4..(l + 1) * split * 4], &y2[l * (10 - split) * 4..(l + 1) * (10 - split) * 4]].concat();
            prop_assert_eq!(&joined[..], &whole[l * 40..(l + 1) * 40]);
        }
    }

    #[test]
    fn conv_stack_is_causal(t in 0usize..7, seed in any::<u64>()) {
        let mut b = ParamBuilder::<f64>::new(seed);
        let conv = Conv2dCausal::new(ConvSpec::encoder(2, 3), &mut b).unwrap();
        b.push_scope("dec");
        let tconv = TConv2dCausal::new(ConvSpec::encoder(3, 2), &mut b).unwrap();
        let p = b.finish();
        let x = FeatureTensor::from_bctf([1, 2, 8, 17], &signal(2 * 8 * 17, seed)).unwrap();
        let run = |x: &FeatureTensor<f64>| tconv.forward(&p, &conv.forward(&p, x).unwrap(), 17).unwrap();
        let base = run(&x);
        let mut x2 = x.clone();
        for tt in t + 1..8 {
            x2.frame_mut(0, tt).iter_mut().for_each(|v| *v = -*v * 2.0 + 1.0);
        }
        let y = run(&x2);
        for tt in 0..=t {
            prop_assert_eq!(y.frame(0, tt), base.frame(0, tt));
        }
    }

    #[test]
    fn init_is_seed_deterministic(seed in any::<u64>()) {
        let cfg = ModelConfig::toy();
        let (_, a) = Mpcrn::new::<f32>(&cfg, seed).unwrap();
        let (_, b) = Mpcrn::new::<f32>(&cfg, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn streaming_matches_offline_for_any_hop_aligned_chunking(
        seed in any::<u64>(),
        chunks in proptest::collection::vec(1usize..6, 4..12),
    ) {
        let e = small_enhancer(seed % 5);
        let hop = e.stft_config().hop;
        let total: usize = chunks.iter().sum::<usize>() * hop + 3 * hop;
        let w = wave(signal(total, seed));
        let offline = e.enhance_offline(&w).unwrap();
        let mut st = e.new_stream().unwrap();
        let mut out = Vec::new();
        let mut pos = 0;
        for c in std::iter::once(3).chain(chunks.iter().copied()) {
            out.extend(e.push(&mut st, &w.samples[pos..pos + c * hop]).unwrap());
            pos += c * hop;
        }
        out.extend(e.flush(&mut st).unwrap());
        prop_assert_eq!(out.len(), offline.len());
        let max = out.iter().zip(&offline.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(max <= 1e-5, "{}", max);
    }

    #[test]
    fn output_depends_on_at_most_one_window_of_lookahead(seed in any::<u64>(), at in 600usize..3000) {
        let e = small_enhancer(seed % 3);
        let win = e.stft_config().win_len;
        let x = signal(4096, seed);
        let base = e.enhance_offline(&wave(x.clone())).unwrap();
        let mut y = x.clone();
        y[at] += 0.5;
        let moved = e.enhance_offline(&wave(y)).unwrap();
        let first_free = at + 1 - win;
        prop_assert_eq!(&moved.samples[..first_free], &base.samples[..first_free]);
        prop_assert!(moved.samples[first_free..].iter().zip(&base.samples[first_free..]).any(|(a, b)| a != b));
    }
}

#[test]
fn stream_footprint_is_constant() {
    let e = small_enhancer(1);
    let hop = e.stft_config().hop;
    let mut st = e.new_stream().unwrap();
    e.prime(&mut st, &signal(e.stft_config().win_len - hop, 0)).unwrap();
    let x = signal(hop, 2);
    let mut at_10 = 0;
    for f in 1..=10_000 {
        e.process_frame(&mut st, &x).unwrap();
        if f == 10 {
            at_10 = st.footprint();
        }
    }
    assert_eq!(st.frames_processed(), 10_000);
    assert_eq!(st.footprint(), at_10);
}

#[test]
fn masks_stay_bounded_for_extreme_spectra() {
    let cfg = ModelConfig::toy();
    let (m, p) = Mpcrn::new::<f32>(&cfg, 3).unwrap();
    for scale in [1e6f32, -1e6] {
        let v: Vec<f32> = signal(2 * 6 * 257, 4).iter().map(|s| *s as f32 * scale).collect();
        let x = FeatureTensor::from_bctf([1, 2, 6, 257], &v).unwrap();
        let y = m.forward_eval(&p, &x).unwrap();
        assert_eq!(y.shape(), [1, 3, 6, 257]);
        for t in 0..6 {
            let f = y.frame(0, t);
            assert!(f[..257].iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(f[257..].iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }
}
