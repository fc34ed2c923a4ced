use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::{LossKind, RunConfig};
use super::log::{Bucket, Checkpoint, EpochRecord, EvalTable, RunLog};
use crate::complex::ComplexPair;
use crate::dsp::{istft, istft_graph, loss_l1_spec, loss_mse_spec, loss_sisdr, si_sdr, stft, synth_dataset, synth_fixed_snr};
use crate::dsp::{Framing, MixtureExample, Spectrogram};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::zoo::{preset, training_pair, Model};
use super::report::check_pair;

/// SNRs of the evaluation buckets.
pub const SNR_BUCKETS: [f64; 3] = [-5.0, 0.0, 5.0];

/// Largest relative parameter gap allowed within a training pair.
pub const PARITY_TOLERANCE: f64 = 0.01;

const EVAL_GROUP: usize = 8;

/// Environment variable capping evaluation worker threads.
pub const THREADS_ENV: &str = "CPLXBENCH_THREADS";

/// Independent seed for one purpose of a run.
fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.next_u64()
}

const TRAIN_STREAM: u64 = 1;
const VALID_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;

/// A mixture with its spectrograms precomputed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub noisy: ComplexPair,
    pub clean_spec: ComplexPair,
    pub clean: Vec<f64>,
    pub mixed: Vec<f64>,
    pub snr_db: f64,
}

pub fn prepare(examples: &[MixtureExample], framing: &Framing) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|ex| {
            Ok(Prepared {
                noisy: stft(&ex.mixed, framing)?.data,
                clean_spec: stft(&ex.clean, framing)?.data,
                clean: ex.clean.clone(),
                mixed: ex.mixed.clone(),
                snr_db: ex.snr_db,
            })
        })
        .collect()
}

fn stack<'a>(parts: impl Iterator<Item = &'a ComplexPair>) -> Result<ComplexPair> {
    let (mut re, mut im) = (Vec::new(), Vec::new());
    for p in parts {
        let s = p.shape();
        re.push(p.re.reshape(&[1, s[0], s[1]])?);
        im.push(p.im.reshape(&[1, s[0], s[1]])?);
    }
    ComplexPair::new(
        Tensor::concat(&re.iter().collect::<Vec<_>>(), 0)?,
        Tensor::concat(&im.iter().collect::<Vec<_>>(), 0)?,
    )
}

/// Training loss of one minibatch.
pub fn batch_loss(g: &mut Graph, model: &Model, store: &ParamStore, batch: &[&Prepared], loss: LossKind) -> Result<NodeId> {
    let noisy = g.c_constant(stack(batch.iter().map(|p| &p.noisy))?);
    let est = model.forward(g, store, noisy)?;
    match loss {
        LossKind::SiSdr => {
            let n = batch[0].clean.len();
            let wave = istft_graph(g, est, &model.spec().framing, n)?;
            let data: Vec<f64> = batch.iter().flat_map(|p| p.clean.iter().copied()).collect();
            loss_sisdr(g, wave, &Tensor::new(&[batch.len(), n], data)?)
        }
        LossKind::L1Spec => loss_l1_spec(g, est, &stack(batch.iter().map(|p| &p.clean_spec))?),
        LossKind::MseSpec => loss_mse_spec(g, est, &stack(batch.iter().map(|p| &p.clean_spec))?),
    }
}

/// Worker count for evaluation: `CPLXBENCH_THREADS` if set, else all cores.
pub fn eval_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn score_group(model: &Model, store: &ParamStore, group: &[Prepared]) -> Result<Vec<(f64, f64)>> {
    let framing = model.spec().framing;
    let mut g = Graph::new();
    let noisy = g.c_constant(stack(group.iter().map(|p| &p.noisy))?);
    let est = model.forward(&mut g, store, noisy)?;
    let est = g.c_value(est)?;
    let (t, f) = (group[0].noisy.shape()[0], group[0].noisy.shape()[1]);
    group
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let row = |x: &Tensor| x.slice_axis(0, i, 1).and_then(|r| r.reshape(&[t, f]));
            let spec = Spectrogram::new(ComplexPair::new(row(&est.re)?, row(&est.im)?)?, framing, p.clean.len())?;
            let wave = istft(&spec)?;
            Ok((si_sdr(&p.mixed, &p.clean)?, si_sdr(&wave, &p.clean)?))
        })
        .collect()
}

/// Per-example (noisy, enhanced) SI-SDR, in input order whatever the
/// thread count: fixed groups are scored independently and merged by index.
pub fn score(model: &Model, store: &ParamStore, set: &[Prepared], threads: usize) -> Result<Vec<(f64, f64)>> {
    let groups: Vec<&[Prepared]> = set.chunks(EVAL_GROUP).collect();
    let workers = threads.clamp(1, groups.len().max(1));
    type Slot = Option<Result<Vec<(f64, f64)>>>;
    let mut slots: Vec<Slot> = (0..groups.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let groups = &groups;
                s.spawn(move || {
                    (w..groups.len())
                        .step_by(workers)
                        .map(|k| (k, score_group(model, store, groups[k])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("evaluation worker panicked") {
                slots[k] = Some(r);
            }
        }
    });
    let mut out = Vec::with_capacity(set.len());
    for r in slots {
        out.extend(r.expect("every group scored")?);
    }
    Ok(out)
}

/// Bucket means over a fixed-SNR split laid out bucket by bucket.
pub fn bucketize(scores: &[(f64, f64)], snrs: &[f64]) -> Vec<Bucket> {
    let per = scores.len() / snrs.len().max(1);
    snrs.iter()
        .enumerate()
        .map(|(j, &snr)| {
            let part = &scores[j * per..(j + 1) * per];
            let n = part.len() as f64;
            Bucket {
                snr_db: snr,
                count: part.len(),
                noisy: part.iter().map(|s| s.0).sum::<f64>() / n,
                enhanced: part.iter().map(|s| s.1).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn valid_split(cfg: &RunConfig) -> Result<Vec<Prepared>> {
    let ex = synth_fixed_snr(
        derive_seed(cfg.seed, VALID_STREAM),
        cfg.corpus.valid_per_snr,
        &SNR_BUCKETS,
        &cfg.corpus.spec,
    )?;
    prepare(&ex, &cfg.model.framing)
}

pub fn test_split(cfg: &RunConfig) -> Result<Vec<Prepared>> {
    let ex = synth_fixed_snr(
        derive_seed(cfg.seed, TEST_STREAM),
        cfg.corpus.test_per_snr,
        &SNR_BUCKETS,
        &cfg.corpus.spec,
    )?;
    prepare(&ex, &cfg.model.framing)
}

pub fn train_split(cfg: &RunConfig) -> Result<Vec<Prepared>> {
    let ex = synth_dataset(derive_seed(cfg.seed, TRAIN_STREAM), cfg.corpus.train, &cfg.corpus.spec)?;
    prepare(&ex, &cfg.model.framing)
}

pub struct TrainOutcome {
    pub log: RunLog,
    pub model: Model,
    /// Parameters after the last epoch.
    pub store: ParamStore,
    pub best: Checkpoint,
    /// Wall seconds per epoch, epoch 0 included.
    pub seconds: Vec<f64>,
}

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "runlog.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const CHECKPOINT_FILE: &str = "best.json";

struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn write(&self, name: &str, body: &str) -> Result<()> {
        if let Some(d) = self.dir {
            std::fs::write(d.join(name), body)?;
        }
        Ok(())
    }

    fn flush(&self, log: &RunLog, seconds: &[f64]) -> Result<()> {
        self.write(LOG_FILE, &log.to_jsonl()?)?;
        let timing: String = seconds
            .iter()
            .enumerate()
            .map(|(e, s)| format!("{{\"epoch\":{e},\"seconds\":{s:.3}}}\n"))
            .collect();
        self.write(TIMING_FILE, &timing)
    }
}

fn validate(model: &Model, store: &ParamStore, valid: &[Prepared], threads: usize) -> Result<(Vec<Bucket>, f64)> {
    let scores = score(model, store, valid, threads)?;
    let mean = scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64;
    Ok((bucketize(&scores, &SNR_BUCKETS), mean))
}

/// Trains `cfg.model` from a seeded initialization. With `out`, the config,
/// log, timing and best checkpoint are written there as training proceeds;
/// on divergence the log so far is kept and an error returned.
pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some((r, c)) = cfg.preset.as_deref().and_then(training_pair) {
        check_pair(&preset(r)?, &preset(c)?, PARITY_TOLERANCE)?;
    }
    let sink = Sink { dir: out };
    if let Some(d) = out {
        std::fs::create_dir_all(d)?;
    }
    sink.write(CONFIG_FILE, &cfg.to_text())?;
    let threads = eval_threads()?;

    let mut store = ParamStore::seeded(cfg.seed);
    let model = Model::build(&cfg.model, &mut store)?;
    let train_set = train_split(cfg)?;
    let valid = valid_split(cfg)?;
    let mut opt = Adam::new(cfg.adam, &store);

    let mut log = RunLog {
        model: cfg.model.name.clone(),
        epochs: Vec::new(),
    };
    let mut seconds = Vec::new();
    let start = Instant::now();
    let (buckets, mean) = validate(&model, &store, &valid, threads)?;
    let mut best = Checkpoint::capture(&model, &store, 0, mean)?;
    log.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: None,
        valid: buckets,
        valid_mean: mean,
        best: true,
    });
    seconds.push(start.elapsed().as_secs_f64());
    sink.flush(&log, &seconds)?;
    sink.write(CHECKPOINT_FILE, &serde_json::to_string(&best)?)?;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM));
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch) {
            let batch: Vec<&Prepared> = idx.iter().map(|&i| &train_set[i]).collect();
            let mut g = Graph::new();
            let loss = batch_loss(&mut g, &model, &store, &batch, cfg.loss)?;
            let value = g.value(loss)?.item()?;
            let diverged = |msg: String| {
                sink.flush(&log, &seconds)?;
                Err(Error::Diverged { epoch, msg })
            };
            if !value.is_finite() {
                return diverged(format!("loss {value} at batch {batches}"));
            }
            let grads = g.backward(loss)?;
            if let Err(e) = opt.step(&mut store, &grads) {
                return diverged(e.to_string());
            }
            total += value;
            batches += 1;
        }
        let (buckets, mean) = validate(&model, &store, &valid, threads)?;
        let improved = mean > best.valid_mean;
        if improved {
            best = Checkpoint::capture(&model, &store, epoch, mean)?;
            sink.write(CHECKPOINT_FILE, &serde_json::to_string(&best)?)?;
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: Some(total / batches as f64),
            valid: buckets,
            valid_mean: mean,
            best: improved,
        });
        seconds.push(start.elapsed().as_secs_f64());
        sink.flush(&log, &seconds)?;
    }
    Ok(TrainOutcome {
        log,
        model,
        store,
        best,
        seconds,
    })
}

/// Scores a model on the test split of `cfg`.
pub fn evaluate_model(cfg: &RunConfig, model: &Model, store: &ParamStore) -> Result<EvalTable> {
    if model.spec().framing != cfg.model.framing || cfg.corpus.spec.sample_rate != model.spec().framing.sample_rate {
        return Err(Error::Framing {
            expected: model.spec().framing.label(),
            got: format!("{} with a {} Hz corpus", cfg.model.framing.label(), cfg.corpus.spec.sample_rate),
        });
    }
    let test = test_split(cfg)?;
    let scores = score(model, store, &test, eval_threads()?)?;
    Ok(EvalTable {
        model: model.name().to_string(),
        buckets: bucketize(&scores, &SNR_BUCKETS),
    })
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Checkpoint) -> Result<EvalTable> {
    let (model, store) = checkpoint.restore()?;
    evaluate_model(cfg, &model, &store)
}
