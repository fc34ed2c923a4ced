use super::*;
use crate::dsp::Framing;
use crate::nn::{Domain, Gating};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::zoo::{preset, Arch, LinearStackSpec, Model, ModelSpec, OutputMode};

fn small(cfg: &mut RunConfig, epochs: usize) {
    cfg.epochs = epochs;
    cfg.batch = 2;
    cfg.corpus.train = 6;
    cfg.corpus.valid_per_snr = 2;
    cfg.corpus.test_per_snr = 3;
    cfg.corpus.spec.duration_s = 0.25;
}

fn small_preset(name: &str, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::from_preset(name).unwrap();
    small(&mut cfg, epochs);
    cfg
}

/// One real linear layer from the noisy spectrum straight to the mask.
fn mask_model(bias_re: f64) -> (RunConfig, Model, ParamStore) {
    let spec = ModelSpec {
        name: "mask".into(),
        framing: Framing::W320_H160,
        output: OutputMode::Masking,
        arch: Arch::LinearStack(LinearStackSpec {
            domain: Domain::Real,
            hidden: vec![],
            bias: true,
        }),
    };
    let mut cfg = RunConfig::new(spec.clone());
    small(&mut cfg, 0);
    let mut store = ParamStore::seeded(0);
    let model = Model::build(&spec, &mut store).unwrap();
    let bins = spec.framing.bins();
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.shape(id).to_vec();
        let value = if store.name(id) == "fc0.b" {
            let data = (0..2 * bins).map(|i| if i < bins { bias_re } else { 0.0 }).collect();
            Tensor::new(&shape, data).unwrap()
        } else {
            Tensor::zeros(&shape)
        };
        store.set(id, value).unwrap();
    }
    (cfg, model, store)
}

#[test]
fn zero_epochs_logs_only_the_untrained_evaluation() {
    let cfg = small_preset("gcrn_tiny", 0);
    let dir = tempfile::tempdir().unwrap();
    let out = train(&cfg, Some(dir.path())).unwrap();
    assert_eq!(out.log.epochs.len(), 1);
    let e = &out.log.epochs[0];
    assert_eq!((e.epoch, e.train_loss, e.best), (0, None, true));
    assert_eq!(e.valid.len(), SNR_BUCKETS.len());
    assert!(e.valid.iter().all(|b| b.count == 2));
    assert_eq!(out.best.epoch, 0);
    let text = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(RunLog::from_jsonl(&text).unwrap(), out.log);
    let back = RunConfig::from_text(&std::fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap(), out.best);
}

#[test]
fn identical_configs_give_identical_logs() {
    let cfg = small_preset("cgcrn_tiny", 2);
    let a = train(&cfg, None).unwrap();
    let b = train(&cfg, None).unwrap();
    assert_eq!(a.log.to_jsonl().unwrap(), b.log.to_jsonl().unwrap());
    assert_eq!(a.best, b.best);
    let ta = evaluate(&cfg, &a.best).unwrap();
    let tb = evaluate(&cfg, &b.best).unwrap();
    assert_eq!(ta.render(crate::accounting::TableFormat::Csv), tb.render(crate::accounting::TableFormat::Csv));

    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(train(&other, None).unwrap().log, a.log);
}

#[test]
fn training_reduces_the_loss() {
    let mut cfg = small_preset("gcrn_tiny", 3);
    cfg.adam.lr = 3e-3;
    let out = train(&cfg, None).unwrap();
    let losses: Vec<f64> = out.log.epochs.iter().filter_map(|e| e.train_loss).collect();
    assert!(losses[2] < losses[0], "{losses:?}");
    assert!(out.log.epochs.windows(2).all(|w| w[0].epoch + 1 == w[1].epoch));
    let best = out.log.best().unwrap();
    assert_eq!(best.epoch, out.best.epoch);
    assert_eq!(best.valid_mean, out.best.valid_mean);
}

#[test]
fn identity_mask_passes_the_noisy_signal_through() {
    let (cfg, model, store) = mask_model(1.0);
    let table = evaluate_model(&cfg, &model, &store).unwrap();
    assert_eq!(table.buckets.len(), 3);
    for b in &table.buckets {
        assert_eq!(b.count, 3);
        assert!((b.enhanced - b.noisy).abs() < 1e-8, "{b:?}");
    }
}

#[test]
fn zero_output_scores_the_floor() {
    let (cfg, model, store) = mask_model(0.0);
    let table = evaluate_model(&cfg, &model, &store).unwrap();
    for b in &table.buckets {
        assert_eq!(b.enhanced, -crate::dsp::SI_SDR_CAP);
        assert!(b.noisy > -10.0 && b.noisy < 10.0);
    }
}

#[test]
fn buckets_follow_the_fixed_snrs() {
    let cfg = small_preset("gcrn_tiny", 0);
    let test = test_split(&cfg).unwrap();
    assert_eq!(test.len(), 9);
    for (i, p) in test.iter().enumerate() {
        assert_eq!(p.snr_db, SNR_BUCKETS[i / 3]);
    }
    let valid = valid_split(&cfg).unwrap();
    assert_ne!(valid[0].clean, test[0].clean);
    let train = train_split(&cfg).unwrap();
    assert!(train.iter().all(|p| (-5.0..=5.0).contains(&p.snr_db)));
}

#[test]
fn scores_do_not_depend_on_the_thread_count() {
    let cfg = small_preset("cgcrn_tiny", 0);
    let mut store = ParamStore::seeded(3);
    let model = Model::build(&cfg.model, &mut store).unwrap();
    let mut set = test_split(&cfg).unwrap();
    set.extend(valid_split(&cfg).unwrap());
    let one = score(&model, &store, &set, 1).unwrap();
    for threads in [2, 3, 16] {
        assert_eq!(score(&model, &store, &set, threads).unwrap(), one);
    }
}

#[test]
fn divergence_keeps_the_log() {
    let mut cfg = small_preset("gcrn_tiny", 3);
    cfg.loss = LossKind::MseSpec;
    cfg.adam.lr = 1e300;
    let dir = tempfile::tempdir().unwrap();
    let err = train(&cfg, Some(dir.path())).err().expect("training must diverge");
    assert!(matches!(err, crate::Error::Diverged { epoch: 1, .. }), "{err}");
    let log = RunLog::from_jsonl(&std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap()).unwrap();
    assert_eq!(log.epochs.len(), 1);
    assert_eq!(log.epochs[0].epoch, 0);
}

#[test]
fn separate_gating_trains_without_non_finite_values() {
    let mut cfg = small_preset("cgcrn_tiny", 2);
    cfg.preset = None;
    if let Arch::Gcrn(g) = &mut cfg.model.arch {
        g.gating = Gating::Separate;
    }
    let out = train(&cfg, None).unwrap();
    for e in &out.log.epochs {
        assert!(e.train_loss.is_none_or(f64::is_finite));
        assert!(e.valid_mean.is_finite());
    }
}

#[test]
fn every_loss_trains() {
    for loss in [LossKind::SiSdr, LossKind::L1Spec, LossKind::MseSpec] {
        let mut cfg = small_preset("gcrn_tiny", 1);
        cfg.loss = loss;
        let out = train(&cfg, None).unwrap();
        assert!(out.log.epochs[1].train_loss.unwrap().is_finite(), "{loss}");
    }
}

#[test]
fn evaluation_rejects_a_framing_mismatch() {
    let cfg = small_preset("gcrn_tiny", 0);
    let out = train(&cfg, None).unwrap();
    let mut other = RunConfig::from_preset("lstm").unwrap();
    other.corpus.test_per_snr = 1;
    assert!(matches!(evaluate(&other, &out.best), Err(crate::Error::Framing { .. })));
}

#[test]
fn training_pairs_are_matched() {
    for &(r, c) in crate::zoo::TRAINING_PAIRS {
        let pc = check_pair(&preset(r).unwrap(), &preset(c).unwrap(), PARITY_TOLERANCE).unwrap();
        assert!(pc.param_gap() <= PARITY_TOLERANCE);
        assert!(pc.mac_ratio() > 1.0);
    }
    let err = check_pair(&preset("gcrn_m").unwrap(), &preset("cgcrn_m").unwrap(), 0.01).unwrap_err();
    assert!(err.to_string().contains("differ"));
    let err = check_pair(&preset("c_linear").unwrap(), &preset("r_linear").unwrap(), 0.01).unwrap_err();
    assert!(err.to_string().contains("MACs"), "{err}");
}

#[test]
fn comparison_table_records_the_gap() {
    let bucket = |snr_db, enhanced| Bucket {
        snr_db,
        count: 4,
        noisy: snr_db,
        enhanced,
    };
    let run = |model: &str, e0, e1| RunSummary {
        model: model.into(),
        params: 1000,
        macs: 2_000_000,
        best_epoch: 3,
        eval: EvalTable {
            model: model.into(),
            buckets: vec![bucket(0.0, e0), bucket(5.0, e1)],
        },
    };
    let runs = [run("r", 7.0, 9.0), run("c", 6.5, 9.25)];
    let csv = comparison_table(&runs, crate::accounting::TableFormat::Csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "r,1000,2000000,3,0,0.0000,7.0000,7.0000");
    assert!(lines.contains(&"r,c,0,0.5000"));
    assert!(lines.contains(&"r,c,5,0.2500"));
    let md = comparison_table(&runs, crate::accounting::TableFormat::Markdown).unwrap();
    assert!(md.contains("| c | 0.00 M | 2.00 M | 3 | 5 |"), "{md}");
    assert!(comparison_table(&[], crate::accounting::TableFormat::Csv).is_err());
}

#[test]
fn run_summaries_load_from_disk() {
    let root = tempfile::tempdir().unwrap();
    assert!(collect_runs(root.path()).is_err());
    let cfg = small_preset("gcrn_tiny", 1);
    let dir = root.path().join("run");
    let out = train(&cfg, Some(&dir)).unwrap();
    let table = evaluate(&cfg, &out.best).unwrap();
    std::fs::write(dir.join(EVAL_FILE), serde_json::to_string(&table).unwrap()).unwrap();
    let runs = collect_runs(root.path()).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].eval, table);
    assert_eq!(runs[0].best_epoch, out.best.epoch);
    assert_eq!(runs[0].params, out.model.param_count().unwrap());
}
