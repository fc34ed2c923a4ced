use cplxbench_core::accounting::{count_macs, count_params};
use cplxbench_core::dsp::{istft, mix_at_snr, si_sdr, stft, Framing};
use cplxbench_core::nn::{magnitude_gate, Layer, Linear, Lstm, LstmBias, LstmVariant};
use cplxbench_core::zoo::{preset, Arch, Model, ModelSpec};
use cplxbench_core::{Act, ComplexPair, Domain, Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn signal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(&[n], 1.0, &mut rng).data().to_vec()
}

fn framing() -> impl Strategy<Value = Framing> {
    prop_oneof![Just(Framing::W512_H128), Just(Framing::W320_H160)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip(f in framing(), extra in 0usize..2000, seed in any::<u64>()) {
        let x = signal(f.window_len + extra, seed);
        let y = istft(&stft(&x, &f).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "error {}", err);
    }

    #[test]
    fn si_sdr_ignores_positive_scale(seed in any::<u64>(), k in -20i32..20, noise in 0.01f64..2.0) {
        let r = signal(400, seed);
        let n = signal(400, seed ^ 1);
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + noise * b).collect();
        let base = si_sdr(&e, &r).unwrap();
        let scaled: Vec<f64> = e.iter().map(|v| v * 2f64.powi(k)).collect();
        prop_assert_eq!(si_sdr(&scaled, &r).unwrap(), base);
    }

    #[test]
    fn mixing_hits_the_requested_snr(seed in any::<u64>(), snr in -30.0f64..30.0, len in 1usize..700) {
        let ex = mix_at_snr(&signal(500, seed), &signal(len, seed ^ 7), snr, seed).unwrap();
        prop_assert!((ex.realized_snr() - snr).abs() < 1e-9);
        for ((m, c), n) in ex.mixed.iter().zip(&ex.clean).zip(&ex.noise) {
            prop_assert_eq!(*m, c + n);
        }
    }

    #[test]
    fn magnitude_gate_stays_in_unit_interval(re in -1e6f64..1e6, im in -1e6f64..1e6, shrink in 0i32..300) {
        let s = 10f64.powi(-shrink);
        let mut g = Graph::new();
        let z = g.c_constant(ComplexPair::new(Tensor::scalar(re * s), Tensor::scalar(im * s)).unwrap());
        let gate = magnitude_gate(&mut g, z).unwrap();
        let v = g.value(gate).unwrap().data()[0];
        prop_assert!((0.0..1.0).contains(&v));
        if re * s == 0.0 && im * s == 0.0 {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn quasi_and_full_lstm_have_equal_size(input in 1usize..2000, hidden in 1usize..2000, per_gate in any::<bool>()) {
        let bias = if per_gate { LstmBias::PerGate } else { LstmBias::InputAndHidden };
        let mut s = ParamStore::shape_only();
        let q = Lstm::new(&mut s, "q", LstmVariant::QuasiComplex, input, hidden, 1, bias).unwrap();
        let f = Lstm::new(&mut s, "f", LstmVariant::FullComplex, input, hidden, 1, bias).unwrap();
        prop_assert_eq!(q.param_count(), f.param_count());
        let shape = [1, 3, input];
        prop_assert_eq!(q.mac_count(&shape).unwrap(), f.mac_count(&shape).unwrap());
    }

    #[test]
    fn complex_linear_costs_four_real_macs(input in 1usize..300, output in 1usize..300, frames in 1usize..50) {
        let mut s = ParamStore::shape_only();
        let c = Linear::new(&mut s, "c", Domain::Complex, input, output, true);
        let r = Linear::new(&mut s, "r", Domain::Real, input, output, true);
        prop_assert_eq!(c.param_count(), 2 * r.param_count());
        prop_assert_eq!(c.mac_count(&[frames, input]).unwrap(), 4 * r.mac_count(&[frames, input]).unwrap());
    }

    #[test]
    fn complex_linear_matches_its_structured_real_twin(input in 1usize..8, output in 1usize..8, rows in 1usize..6, seed in any::<u64>()) {
        let mut src = ParamStore::seeded(seed);
        let l = Linear::new(&mut src, "l", Domain::Complex, input, output, true);
        let mut dst = ParamStore::seeded(seed ^ 3);
        let twin = l.structured_real(&src, &mut dst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = ComplexPair::new(Tensor::uniform(&[rows, input], 1.0, &mut rng), Tensor::uniform(&[rows, input], 1.0, &mut rng)).unwrap();
        let mut g = Graph::new();
        let x = Act::Complex(g.c_constant(x));
        let y = l.forward(&mut g, &src, x).unwrap().to_real(&mut g, 1).unwrap();
        let xr = Act::Real(x.to_real(&mut g, 1).unwrap());
        let yr = twin.forward(&mut g, &dst, xr).unwrap().expect_real("twin").unwrap();
        prop_assert!(g.value(y).unwrap().max_abs_diff(g.value(yr).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn macs_grow_with_frames_and_params_do_not(secs in 0.05f64..3.0) {
        for name in ["gcrn_tiny", "cgcrn_tiny", "r_linear"] {
            let spec = preset(name).unwrap();
            let m = Model::build(&spec, &mut ParamStore::shape_only()).unwrap();
            let one = count_macs(&m, 1.0, &spec.framing).unwrap();
            let r = count_macs(&m, secs, &spec.framing).unwrap();
            prop_assert_eq!(r.params, count_params(&m).unwrap().params);
            prop_assert_eq!(r.frames, 1 + spec.framing.samples(secs) / spec.framing.hop);
            prop_assert_eq!(r.macs * one.frames as u64, one.macs * r.frames as u64);
        }
    }

    #[test]
    fn gcrn_spec_text_round_trips(c0 in 1usize..9, c1 in 1usize..9, layers in 1usize..3, complex in any::<bool>()) {
        let mut spec = preset(if complex { "cgcrn_tiny" } else { "gcrn_tiny" }).unwrap();
        if let Arch::Gcrn(g) = &mut spec.arch {
            g.channels = vec![2 * c0, 2 * c1, 8, 8];
            g.lstm_layers = layers;
        }
        let back = ModelSpec::from_text(&spec.to_text()).unwrap();
        prop_assert_eq!(back, spec);
    }
}
