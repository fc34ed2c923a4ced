use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::metrics::{mix_at_snr, MixtureExample};
use crate::error::{invalid, Result};

/// Parameters of the synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            sample_rate: 16_000,
            duration_s: 1.0,
            snr_min_db: -5.0,
            snr_max_db: 5.0,
        }
    }
}

/// Generator for example `index` of the corpus keyed by `seed`; each index
/// has its own ChaCha stream, so examples can be produced in any order.
fn example_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Harmonic "speech": 3 to 8 harmonics of f0 in [80, 300] Hz, amplitude
/// modulated at 2 to 8 Hz.
pub fn synth_speech<R: Rng>(rng: &mut R, n: usize, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let f0 = rng.gen_range(80.0..300.0);
    let harmonics = rng.gen_range(3..=8usize);
    let partials: Vec<(f64, f64, f64)> = (1..=harmonics)
        .map(|h| {
            let amp = rng.gen_range(0.3..1.0) / h as f64;
            (h as f64 * f0, amp, rng.gen_range(0.0..2.0 * PI))
        })
        .filter(|(f, _, _)| *f < sr / 2.0)
        .collect();
    let am_rate = rng.gen_range(2.0..8.0);
    let am_depth = rng.gen_range(0.5..0.9);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 1.0 - am_depth * 0.5 * (1.0 + (2.0 * PI * am_rate * t + am_phase).sin());
            let s: f64 = partials.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            0.3 * env * s
        })
        .collect()
}

/// White Gaussian noise through a one-pole filter with a random tilt
/// coefficient in [-0.9, 0.9] (negative brightens, positive darkens).
pub fn synth_noise<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let a: f64 = rng.gen_range(-0.9..0.9);
    let mut y = 0.0;
    (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            y = w + a * y;
            y
        })
        .collect()
}

fn example(seed: u64, index: u64, spec: &CorpusSpec, snr: Option<f64>) -> Result<MixtureExample> {
    let n = (spec.duration_s * spec.sample_rate as f64).round() as usize;
    let mut rng = example_rng(seed, index);
    let clean = synth_speech(&mut rng, n, spec.sample_rate);
    let noise = synth_noise(&mut rng, n);
    let drawn = rng.gen_range(spec.snr_min_db..=spec.snr_max_db);
    mix_at_snr(&clean, &noise, snr.unwrap_or(drawn), seed)
}

fn check(spec: &CorpusSpec, n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("synth_dataset", "need at least one example"));
    }
    if spec.duration_s.is_nan() || spec.duration_s <= 0.0 || spec.snr_min_db > spec.snr_max_db {
        return Err(invalid("synth_dataset", "duration must be positive and the SNR range ordered"));
    }
    Ok(())
}

/// `n` mixtures with SNR uniform in the spec's range.
pub fn synth_dataset(seed: u64, n: usize, spec: &CorpusSpec) -> Result<Vec<MixtureExample>> {
    check(spec, n)?;
    (0..n as u64).map(|i| example(seed, i, spec, None)).collect()
}

/// Mixtures at fixed SNRs, `per_snr` examples for each entry of `snrs`.
pub fn synth_fixed_snr(seed: u64, per_snr: usize, snrs: &[f64], spec: &CorpusSpec) -> Result<Vec<MixtureExample>> {
    check(spec, per_snr * snrs.len())?;
    let mut out = Vec::with_capacity(per_snr * snrs.len());
    for (j, &snr) in snrs.iter().enumerate() {
        for i in 0..per_snr {
            out.push(example(seed, (j * per_snr + i) as u64, spec, Some(snr))?);
        }
    }
    Ok(out)
}
