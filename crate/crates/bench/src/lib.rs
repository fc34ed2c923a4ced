//! Shared fixtures for the benchmarks.

use cplxbench_core::dsp::{synth_dataset, CorpusSpec};
use cplxbench_core::train::{prepare, Prepared};
use cplxbench_core::zoo::preset;
use cplxbench_core::{ComplexPair, Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random complex tensor with entries in `[-1, 1)`.
pub fn complex_input(shape: &[usize], seed: u64) -> ComplexPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexPair::new(Tensor::uniform(shape, 1.0, &mut rng), Tensor::uniform(shape, 1.0, &mut rng))
        .expect("matching shapes")
}

/// A few half-second mixtures framed for `preset_name`.
pub fn mixtures(preset_name: &str, n: usize) -> Result<Vec<Prepared>> {
    let framing = preset(preset_name)?.framing;
    let spec = CorpusSpec {
        sample_rate: framing.sample_rate,
        duration_s: 0.5,
        ..CorpusSpec::default()
    };
    prepare(&synth_dataset(7, n, &spec)?, &framing)
}
