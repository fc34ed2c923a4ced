use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradcheck::{check, project, GradCheckOptions};
use crate::{CNode, ComplexPair, Graph, ParamStore, Tensor};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

#[test]
fn frame_counts() {
    assert_eq!(Framing::W512_H128.frames(16_000), 126);
    assert_eq!(Framing::W320_H160.frames(16_000), 101);
    assert_eq!(Framing::W512_H128.bins(), 257);
    assert_eq!(Framing::W320_H160.bins(), 161);
    assert!(Framing::new(16_000, 512, 0).is_err());
    assert!(Framing::new(16_000, 512, 513).is_err());
}

#[test]
fn round_trip_both_framings() {
    for f in [Framing::W512_H128, Framing::W320_H160] {
        for (n, seed) in [(16_000, 1), (5_003, 2), (f.window_len, 3)] {
            let x = noise(n, seed);
            let y = istft(&stft(&x, &f).unwrap()).unwrap();
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{} n={n}: {err}", f.label());
        }
    }
}

#[test]
fn dc_and_sine_bins() {
    let f = Framing::W512_H128;
    let spec = stft(&vec![0.5; 4096], &f).unwrap();
    let bins = f.bins();
    // interior frame: the periodic Hann window leaks DC into bin 1 only
    let t = 10;
    let row: Vec<f64> = (0..bins)
        .map(|k| spec.data.re.data()[t * bins + k].hypot(spec.data.im.data()[t * bins + k]))
        .collect();
    assert!(row[0] > 100.0);
    assert!((row[1] / row[0] - 0.5).abs() < 1e-12);
    assert!(row[2..].iter().all(|v| *v < 1e-9 * row[0]));

    let sine: Vec<f64> = (0..8000).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin()).collect();
    let spec = stft(&sine, &f).unwrap();
    let peak = (0..bins)
        .max_by(|&a, &b| {
            let m = |k: usize| spec.data.re.data()[t * bins + k].hypot(spec.data.im.data()[t * bins + k]);
            m(a).total_cmp(&m(b))
        })
        .unwrap();
    assert_eq!(peak, 32);
}

#[test]
fn short_signal_rejected() {
    assert!(stft(&[0.0; 100], &Framing::W512_H128).is_err());
}

#[test]
fn parseval() {
    for f in [Framing::W512_H128, Framing::W320_H160] {
        let x = noise(7_777, 9);
        let spec = stft(&x, &f).unwrap();
        let (a, b) = (spectral_energy(&spec), windowed_energy(&x, &f).unwrap());
        assert!(((a - b) / b).abs() < 1e-6);
    }
}

#[test]
fn graph_istft_matches_eager() {
    let f = Framing::new(16_000, 16, 4).unwrap();
    let x = noise(40, 4);
    let spec = stft(&x, &f).unwrap();
    let mut g = Graph::new();
    let re = spec.data.re.reshape(&[1, spec.frames(), spec.bins()]).unwrap();
    let im = spec.data.im.reshape(&[1, spec.frames(), spec.bins()]).unwrap();
    let z = g.c_constant(ComplexPair::new(re, im).unwrap());
    let y = istft_graph(&mut g, z, &f, 40).unwrap();
    let eager = istft(&spec).unwrap();
    let diff = g.value(y).unwrap().data().iter().zip(&eager).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-14);
}

#[test]
fn istft_gradient() {
    let f = Framing::new(16_000, 16, 4).unwrap();
    let (frames, bins) = (f.frames(37), f.bins());
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut inputs = vec![
        Tensor::uniform(&[2, frames, bins], 1.0, &mut r),
        Tensor::uniform(&[2, frames, bins], 1.0, &mut r),
    ];
    let mut store = ParamStore::seeded(0);
    let opts = GradCheckOptions {
        max_entries: 200,
        ..Default::default()
    };
    let rep = check(
        &mut store,
        &mut inputs,
        |g, _, ids| {
            let y = istft_graph(g, CNode { re: ids[0], im: ids[1] }, &f, 37)?;
            project(g, y, 5)
        },
        &opts,
        &mut r,
    )
    .unwrap();
    assert!(rep.max_rel_err < 1e-6, "{}", rep.worst);
}

#[test]
fn si_sdr_cases() {
    let x = noise(1000, 1);
    assert_eq!(si_sdr(&x, &x).unwrap(), SI_SDR_CAP);
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    assert_eq!(si_sdr(&x2, &x).unwrap(), si_sdr(&x, &x).unwrap());
    assert_eq!(si_sdr(&vec![0.0; 1000], &x).unwrap(), -SI_SDR_CAP);
    // orthogonal residual of equal power
    let r = vec![1.0, 0.0, 1.0, 0.0];
    let e = vec![1.0, 1.0, 1.0, 1.0];
    assert!(si_sdr(&e, &r).unwrap().abs() < 1e-12);
    assert!(si_sdr(&e, &[0.0; 4]).is_err());
    assert!(si_sdr(&e, &[1.0; 3]).is_err());
}

#[test]
fn si_sdr_scale_invariance() {
    let r = noise(500, 2);
    let e: Vec<f64> = r.iter().zip(noise(500, 3)).map(|(a, b)| a + 0.3 * b).collect();
    let base = si_sdr(&e, &r).unwrap();
    for k in [0.25, 2.0, 1024.0] {
        let s: Vec<f64> = e.iter().map(|v| v * k).collect();
        assert_eq!(si_sdr(&s, &r).unwrap(), base);
    }
    for k in [0.37, 3.3, 91.0] {
        let s: Vec<f64> = e.iter().map(|v| v * k).collect();
        assert!((si_sdr(&s, &r).unwrap() - base).abs() < 1e-12);
    }
}

#[test]
fn mixing_hits_requested_snr() {
    let c = noise(4000, 1);
    let n = noise(1500, 2);
    for snr in [-5.0, 0.0, 3.7, 5.0] {
        let m = mix_at_snr(&c, &n, snr, 0).unwrap();
        assert!((m.realized_snr() - snr).abs() < 1e-9);
        assert_eq!(m.mixed.len(), 4000);
    }
    let m = mix_at_snr(&c, &n, -5.0, 0).unwrap();
    let pc: f64 = c.iter().map(|v| v * v).sum();
    let pn: f64 = m.noise.iter().map(|v| v * v).sum();
    assert!((pn / pc - 10f64.powf(0.5)).abs() < 1e-12);
    let m = mix_at_snr(&c, &n, 300.0, 0).unwrap();
    assert!(m.mixed.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(mix_at_snr(&c, &[0.0; 10], 0.0, 0).is_err());
}

#[test]
fn spectral_losses_closed_forms() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let s = ComplexPair::new(Tensor::uniform(&[3, 5], 1.0, &mut r), Tensor::uniform(&[3, 5], 1.0, &mut r)).unwrap();
    let mut g = Graph::new();
    let e = g.c_constant(s.clone());
    let l = loss_mse_spec(&mut g, e, &s).unwrap();
    assert_eq!(g.value(l).unwrap().item().unwrap(), 0.0);
    let l = loss_l1_spec(&mut g, e, &s).unwrap();
    assert_eq!(g.value(l).unwrap().item().unwrap(), 0.0);
    let z = g.c_constant(ComplexPair::zeros(&[3, 5]));
    let l = loss_l1_spec(&mut g, z, &s).unwrap();
    let mean_abs = |t: &Tensor| t.data().iter().map(|v| v.abs()).sum::<f64>() / t.numel() as f64;
    let mag = crate::complex::complex_magnitude(&s, 0.0).unwrap();
    let want = mean_abs(&s.re) + mean_abs(&s.im) + mean_abs(&mag);
    // the training magnitude carries sqrt(1e-12) at zero
    assert!((g.value(l).unwrap().item().unwrap() - want).abs() < 2e-6);
}

#[test]
fn sisdr_loss_bounds() {
    let x = Tensor::new(&[2, 300], noise(600, 7)).unwrap();
    let mut g = Graph::new();
    let e = g.constant(x.clone());
    let l = loss_sisdr(&mut g, e, &x).unwrap();
    assert_eq!(g.value(l).unwrap().item().unwrap(), -SI_SDR_CAP);
    let y = Tensor::new(&[2, 300], noise(600, 8)).unwrap();
    let e = g.constant(y.clone());
    let l = loss_sisdr(&mut g, e, &x).unwrap();
    let l = g.value(l).unwrap().item().unwrap();
    let want = -(si_sdr(&y.data()[..300], &x.data()[..300]).unwrap() + si_sdr(&y.data()[300..], &x.data()[300..]).unwrap()) / 2.0;
    assert!((l - want).abs() < 1e-9);
}

#[test]
fn loss_gradients() {
    for seed in 0..3 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let reference = ComplexPair::new(Tensor::uniform(&[4, 3], 1.0, &mut r), Tensor::uniform(&[4, 3], 1.0, &mut r)).unwrap();
        let wave = Tensor::uniform(&[2, 50], 1.0, &mut r);
        let mut store = ParamStore::seeded(0);
        let opts = GradCheckOptions::default();
        for square in [false, true] {
            let mut inputs = vec![Tensor::uniform(&[4, 3], 1.0, &mut r), Tensor::uniform(&[4, 3], 1.0, &mut r)];
            let rep = check(
                &mut store,
                &mut inputs,
                |g, _, ids| {
                    let e = CNode { re: ids[0], im: ids[1] };
                    if square {
                        loss_mse_spec(g, e, &reference)
                    } else {
                        loss_l1_spec(g, e, &reference)
                    }
                },
                &opts,
                &mut r,
            )
            .unwrap();
            assert!(rep.max_rel_err < 1e-4, "{}", rep.worst);
        }
        let mut inputs = vec![Tensor::uniform(&[2, 50], 1.0, &mut r)];
        let rep = check(&mut store, &mut inputs, |g, _, ids| loss_sisdr(g, ids[0], &wave), &opts, &mut r).unwrap();
        assert!(rep.max_rel_err < 1e-4, "{}", rep.worst);
    }
}

#[test]
fn corpus_is_deterministic_and_in_range() {
    let spec = CorpusSpec {
        duration_s: 0.25,
        ..Default::default()
    };
    let a = synth_dataset(11, 20, &spec).unwrap();
    let b = synth_dataset(11, 20, &spec).unwrap();
    assert_eq!(a, b);
    for ex in &a {
        assert!((-5.0..=5.0).contains(&ex.snr_db));
        assert!((ex.realized_snr() - ex.snr_db).abs() < 1e-9);
        assert_eq!(ex.mixed.len(), 4000);
    }
    assert_ne!(a[0].clean, a[1].clean);
    let fixed = synth_fixed_snr(3, 2, &[-5.0, 0.0, 5.0], &spec).unwrap();
    assert_eq!(fixed.iter().map(|e| e.snr_db).collect::<Vec<_>>(), vec![-5.0, -5.0, 0.0, 0.0, 5.0, 5.0]);
}

#[test]
fn corpus_mixture_sisdr_tracks_snr() {
    let spec = CorpusSpec {
        duration_s: 0.5,
        ..Default::default()
    };
    let set = synth_dataset(5, 100, &spec).unwrap();
    let mean_sdr = set.iter().map(|e| si_sdr(&e.mixed, &e.clean).unwrap()).sum::<f64>() / 100.0;
    let mean_snr = set.iter().map(|e| e.snr_db).sum::<f64>() / 100.0;
    assert!((mean_sdr - mean_snr).abs() < 0.5, "{mean_sdr} vs {mean_snr}");
}

#[test]
fn wav_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.wav");
    let x: Vec<f64> = noise(500, 1).iter().map(|v| v * 0.5).collect();
    write_wav(&p, &x, 16_000).unwrap();
    let (y, sr) = read_wav(&p).unwrap();
    assert_eq!(sr, 16_000);
    assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1.0 / 32767.0));
}
