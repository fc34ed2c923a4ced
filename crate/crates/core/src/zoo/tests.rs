use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::complex::{ActivationKind, ComplexPair};
use crate::dsp::{stft, Framing, Spectrogram};
use crate::gradcheck::{check, project, GradCheckOptions};
use crate::graph::Graph;
use crate::nn::{Domain, Gating, LstmBias, LstmVariant};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const SMALL: Framing = Framing {
    sample_rate: 16_000,
    window_len: 32,
    hop: 16,
};

fn small_gcrn(enc: Domain, dec: Domain, quasi: bool, gating: Gating, output: OutputMode) -> ModelSpec {
    ModelSpec {
        name: "g".into(),
        framing: SMALL,
        output,
        arch: Arch::Gcrn(GcrnSpec {
            encoder: enc,
            decoder: dec,
            bottleneck: if quasi { LstmVariant::QuasiComplex } else { LstmVariant::Real },
            gating,
            channels: vec![4, 6],
            kernel: Dims2::new(2, 3),
            stride: Dims2::new(1, 2),
            lstm_layers: 1,
            lstm_groups: 1,
            lstm_bias: LstmBias::PerGate,
            output_linear: true,
            activation: ActivationKind::Elu,
        }),
    }
}

fn small_specs() -> Vec<ModelSpec> {
    let mut v = vec![
        small_gcrn(Domain::Real, Domain::Real, false, Gating::RealSigmoid, OutputMode::Mapping),
        small_gcrn(Domain::Complex, Domain::Complex, true, Gating::Magnitude, OutputMode::Masking),
        small_gcrn(Domain::Complex, Domain::Real, false, Gating::Separate, OutputMode::PolarMasking),
    ];
    for d in [Domain::Real, Domain::Complex] {
        v.push(ModelSpec {
            name: "d".into(),
            framing: SMALL,
            output: OutputMode::PolarMasking,
            arch: Arch::Dccrn(DccrnSpec {
                domain: d,
                channels: vec![2, 4],
                kernel: Dims2::new(2, 5),
                stride: Dims2::new(1, 2),
                lstm_hidden: 6,
                lstm_layers: 2,
                lstm_bias: LstmBias::PerGate,
                activation: ActivationKind::Elu,
            }),
        });
        v.push(ModelSpec {
            name: "u".into(),
            framing: SMALL,
            output: OutputMode::Masking,
            arch: Arch::UNet(UNetSpec {
                domain: d,
                channels: vec![3, 4],
                kernels: vec![Dims2::new(3, 3), Dims2::new(3, 3)],
                strides: vec![Dims2::new(2, 2), Dims2::new(1, 2)],
                activation: ActivationKind::ReLU,
            }),
        });
        v.push(ModelSpec {
            name: "l".into(),
            framing: SMALL,
            output: OutputMode::Mapping,
            arch: Arch::LinearStack(LinearStackSpec {
                domain: d,
                hidden: vec![5],
                bias: true,
            }),
        });
    }
    for variant in [LstmVariant::Real, LstmVariant::QuasiComplex, LstmVariant::FullComplex] {
        v.push(ModelSpec {
            name: "s".into(),
            framing: SMALL,
            output: OutputMode::Masking,
            arch: Arch::LstmStack(LstmStackSpec {
                variant,
                hidden: 4,
                layers: 2,
                bias: LstmBias::InputAndHidden,
            }),
        });
    }
    v
}

fn noisy(frames: usize, bins: usize, seed: u64) -> ComplexPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexPair::new(
        Tensor::uniform(&[2, frames, bins], 1.0, &mut rng),
        Tensor::uniform(&[2, frames, bins], 1.0, &mut rng),
    )
    .unwrap()
}

fn run(model: &Model, store: &ParamStore, x: &ComplexPair) -> ComplexPair {
    let mut g = Graph::new();
    let n = g.c_constant(x.clone());
    let y = model.forward(&mut g, store, n).unwrap();
    g.c_value(y).unwrap()
}

#[test]
fn every_preset_builds_and_trace_matches_store() {
    for name in preset_names() {
        let spec = preset(name).unwrap();
        let mut store = ParamStore::shape_only();
        let m = Model::build(&spec, &mut store).unwrap();
        assert_eq!(m.param_count().unwrap(), store.scalar_count(), "{name}");
    }
    for s in suite_names() {
        assert!(!suite(s).unwrap().is_empty());
    }
    assert!(preset("nope").is_err());
    assert!(suite("nope").is_err());
}

#[test]
fn forward_preserves_frames_for_every_family() {
    for spec in small_specs() {
        for frames in [1, 4, 7] {
            let mut store = ParamStore::seeded(3);
            let m = Model::build(&spec, &mut store).unwrap();
            let x = noisy(frames, SMALL.bins(), 1);
            let y = run(&m, &store, &x);
            assert_eq!(y.shape(), x.shape(), "{:?}", spec.arch);
            assert!(y.re.data().iter().chain(y.im.data()).all(|v| v.is_finite()));
        }
    }
}

#[test]
fn text_round_trip_rebuilds_identical_model() {
    for spec in small_specs() {
        let back = ModelSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(back, spec);
        let (mut s1, mut s2) = (ParamStore::seeded(8), ParamStore::seeded(8));
        let m1 = Model::build(&spec, &mut s1).unwrap();
        let m2 = Model::build(&back, &mut s2).unwrap();
        assert_eq!(m1.param_count().unwrap(), m2.param_count().unwrap());
        let x = noisy(5, SMALL.bins(), 2);
        assert_eq!(run(&m1, &s1, &x), run(&m2, &s2, &x));
    }
    for name in preset_names() {
        let spec = preset(name).unwrap();
        assert_eq!(ModelSpec::from_text(&spec.to_text()).unwrap(), spec);
    }
}

fn costs_with_prefix(spec: &ModelSpec, prefix: &str) -> Vec<LayerCost> {
    let mut store = ParamStore::shape_only();
    let m = Model::build(spec, &mut store).unwrap();
    m.layer_costs(50).unwrap().into_iter().filter(|c| c.name.starts_with(prefix)).collect()
}

#[test]
fn gcrn_toggles_are_orthogonal() {
    let base = preset("gcrn_2a").unwrap();
    let quasi = preset("gcrn_2b").unwrap();
    for part in ["enc", "dec", "out"] {
        assert_eq!(costs_with_prefix(&base, part), costs_with_prefix(&quasi, part), "{part}");
    }
    let params = |s: &ModelSpec| costs_with_prefix(s, "").iter().map(|c| c.params).sum::<usize>();
    let macs = |s: &ModelSpec| costs_with_prefix(s, "").iter().map(|c| c.macs).sum::<u64>();
    assert_eq!(params(&base), params(&quasi));
    assert!(macs(&quasi) > macs(&base));
    assert_eq!(params(&base), params(&preset("gcrn_2A").unwrap()));
    assert_eq!(costs_with_prefix(&preset("gcrn_2j").unwrap(), ""), costs_with_prefix(&preset("gcrn_2J").unwrap(), ""));
    // complex encoder changes only the encoder
    let enc = preset("gcrn_2d").unwrap();
    assert_eq!(costs_with_prefix(&base, "dec"), costs_with_prefix(&enc, "dec"));
    assert!(params(&enc) < params(&base));
}

#[test]
fn masking_and_mapping_share_weights() {
    let a = small_gcrn(Domain::Complex, Domain::Complex, true, Gating::Magnitude, OutputMode::Mapping);
    let mut b = a.clone();
    b.output = OutputMode::Masking;
    let (mut sa, mut sb) = (ParamStore::seeded(4), ParamStore::seeded(4));
    let ma = Model::build(&a, &mut sa).unwrap();
    let mb = Model::build(&b, &mut sb).unwrap();
    let x = noisy(3, SMALL.bins(), 5);
    let mut g = Graph::new();
    let n = g.c_constant(x.clone());
    let raw = ma.raw_forward(&mut g, &sa, n).unwrap();
    let masked = mb.forward(&mut g, &sb, n).unwrap();
    let expect = crate::complex::complex_hadamard(&x, &g.c_value(raw).unwrap()).unwrap();
    assert!(g.c_value(masked).unwrap().max_abs_diff(&expect).unwrap() < 1e-14);
}

#[test]
fn heads_identity_and_zero() {
    let x = noisy(3, 5, 6);
    let shape = x.shape().to_vec();
    let mut g = Graph::new();
    let n = g.c_constant(x.clone());
    let one = g.c_constant(ComplexPair::from_real(Tensor::full(&shape, 1.0)));
    let zero = g.c_constant(ComplexPair::zeros(&shape));
    let id = apply_head(&mut g, OutputMode::Masking, n, one).unwrap();
    assert_eq!(g.c_value(id).unwrap(), x);
    let z = apply_head(&mut g, OutputMode::Masking, n, zero).unwrap();
    assert!(g.c_value(z).unwrap().re.data().iter().all(|&v| v == 0.0));
    let pz = apply_head(&mut g, OutputMode::PolarMasking, n, zero).unwrap();
    let pz = g.c_value(pz).unwrap();
    assert!(pz.re.data().iter().chain(pz.im.data()).all(|&v| v == 0.0));
    // a large real mask saturates to unit gain with zero phase shift
    let big = g.c_constant(ComplexPair::from_real(Tensor::full(&shape, 40.0)));
    let pb = apply_head(&mut g, OutputMode::PolarMasking, n, big).unwrap();
    assert!(g.c_value(pb).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
    let m = apply_head(&mut g, OutputMode::Mapping, n, zero).unwrap();
    assert_eq!(m, zero);
}

#[test]
fn enhance_checks_framing() {
    let spec = small_specs().remove(0);
    let mut store = ParamStore::seeded(1);
    let m = Model::build(&spec, &mut store).unwrap();
    let wave: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).sin()).collect();
    let good = stft(&wave, &SMALL).unwrap();
    let out = m.enhance(&store, &good).unwrap();
    assert_eq!(out.data.shape(), good.data.shape());
    let other = Framing::new(16_000, 64, 16).unwrap();
    let bad: Spectrogram = stft(&wave, &other).unwrap();
    assert!(matches!(m.enhance(&store, &bad), Err(crate::Error::Framing { .. })));
}

#[test]
fn dccrn_keeps_dc_bin_silent_under_masking() {
    let spec = small_specs().into_iter().find(|s| s.name == "d").unwrap();
    let mut store = ParamStore::seeded(2);
    let m = Model::build(&spec, &mut store).unwrap();
    let y = run(&m, &store, &noisy(4, SMALL.bins(), 3));
    let bins = SMALL.bins();
    assert!(y.re.data().iter().step_by(bins).all(|&v| v == 0.0));
}

#[test]
fn whole_model_gradients_match_finite_differences() {
    for (k, spec) in small_specs().into_iter().enumerate() {
        let mut store = ParamStore::seeded(10 + k as u64);
        let m = Model::build(&spec, &mut store).unwrap();
        let x = noisy(3, SMALL.bins(), 4);
        let mut inputs = vec![x.re.clone(), x.im.clone()];
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let opts = GradCheckOptions {
            max_entries: 4,
            ..Default::default()
        };
        let rep = check(
            &mut store,
            &mut inputs,
            |g, s, ids| {
                let y = m.forward(g, s, crate::complex::CNode { re: ids[0], im: ids[1] })?;
                let a = project(g, y.re, 1)?;
                let b = project(g, y.im, 2)?;
                g.add(a, b)
            },
            &opts,
            &mut rng,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-4, "{:?}: {}", spec.arch.family(), rep.worst);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = small_gcrn(Domain::Complex, Domain::Real, false, Gating::RealSigmoid, OutputMode::Mapping);
    assert!(Model::build(&s, &mut ParamStore::shape_only()).is_err());
    s = small_gcrn(Domain::Real, Domain::Real, false, Gating::RealSigmoid, OutputMode::Mapping);
    if let Arch::Gcrn(g) = &mut s.arch {
        g.channels = vec![4, 6, 8, 8];
    }
    // 17 bins cannot survive four stride-2 kernel-3 stages
    assert!(Model::build(&s, &mut ParamStore::shape_only()).is_err());
}
