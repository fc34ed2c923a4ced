use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::config::KvConfig;
use crate::dsp::CorpusSpec;
use crate::error::{Error, Result};
use crate::zoo::{preset, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    SiSdr,
    L1Spec,
    MseSpec,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::SiSdr => "sisdr",
            LossKind::L1Spec => "l1_spec",
            LossKind::MseSpec => "mse_spec",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sisdr" => Ok(LossKind::SiSdr),
            "l1_spec" => Ok(LossKind::L1Spec),
            "mse_spec" => Ok(LossKind::MseSpec),
            other => Err(Error::Config(format!("unknown loss `{other}` (sisdr, l1_spec, mse_spec)"))),
        }
    }
}

/// Sizes of the three synthetic splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub spec: CorpusSpec,
    pub train: usize,
    pub valid_per_snr: usize,
    pub test_per_snr: usize,
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Preset the model came from, echoed instead of the full spec.
    pub preset: Option<String>,
    pub loss: LossKind,
    pub adam: AdamConfig,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub corpus: CorpusPlan,
}

const RUN_KEYS: &[&str] = &[
    "run.seed",
    "run.epochs",
    "run.batch",
    "run.loss",
    "optim.lr",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "corpus.train",
    "corpus.valid_per_snr",
    "corpus.test_per_snr",
    "corpus.duration_s",
    "corpus.snr_min_db",
    "corpus.snr_max_db",
];

impl RunConfig {
    /// Desk-scale defaults around `model`.
    pub fn new(model: ModelSpec) -> Self {
        RunConfig {
            corpus: CorpusPlan {
                spec: CorpusSpec {
                    sample_rate: model.framing.sample_rate,
                    duration_s: 0.5,
                    ..CorpusSpec::default()
                },
                train: 200,
                valid_per_snr: 8,
                test_per_snr: 20,
            },
            model,
            preset: None,
            loss: LossKind::SiSdr,
            adam: AdamConfig::default(),
            batch: 4,
            epochs: 30,
            seed: 0,
        }
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        let mut cfg = RunConfig::new(preset(name)?);
        cfg.preset = Some(name.to_string());
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch == 0 {
            return Err(Error::Config("run.batch must be positive".into()));
        }
        let c = &self.corpus;
        if c.train == 0 || c.valid_per_snr == 0 || c.test_per_snr == 0 {
            return Err(Error::Config("corpus split sizes must be positive".into()));
        }
        if c.spec.sample_rate != self.model.framing.sample_rate {
            return Err(Error::Framing {
                expected: format!("{} Hz", self.model.framing.sample_rate),
                got: format!("{} Hz corpus", c.spec.sample_rate),
            });
        }
        let n = self.model.framing.samples(c.spec.duration_s);
        if n < self.model.framing.window_len {
            return Err(Error::Config(format!(
                "corpus.duration_s = {} gives {n} samples, shorter than one window",
                c.spec.duration_s
            )));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {a:?}")));
        }
        Ok(())
    }

    pub fn to_config(&self) -> KvConfig {
        let mut c = match &self.preset {
            Some(p) => {
                let mut c = KvConfig::new();
                c.set("model.preset", p);
                c
            }
            None => self.model.to_config(),
        };
        c.set("run.seed", self.seed);
        c.set("run.epochs", self.epochs);
        c.set("run.batch", self.batch);
        c.set("run.loss", self.loss);
        c.set("optim.lr", self.adam.lr);
        c.set("optim.beta1", self.adam.beta1);
        c.set("optim.beta2", self.adam.beta2);
        c.set("optim.eps", self.adam.eps);
        c.set("corpus.train", self.corpus.train);
        c.set("corpus.valid_per_snr", self.corpus.valid_per_snr);
        c.set("corpus.test_per_snr", self.corpus.test_per_snr);
        c.set("corpus.duration_s", self.corpus.spec.duration_s);
        c.set("corpus.snr_min_db", self.corpus.spec.snr_min_db);
        c.set("corpus.snr_max_db", self.corpus.spec.snr_max_db);
        c
    }

    /// Canonical text: run keys first, then the model.
    pub fn to_text(&self) -> String {
        let mut order = vec!["model.preset"];
        order.extend_from_slice(RUN_KEYS);
        let run = self.to_config().render(&order);
        match &self.preset {
            Some(_) => run,
            None => {
                // model keys keep their own canonical order
                let run_only: String = run.lines().filter(|l| !is_model_line(l)).map(|l| format!("{l}\n")).collect();
                run_only + &self.model.to_text()
            }
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_config(&KvConfig::parse(text)?)
    }

    pub fn from_config(c: &KvConfig) -> Result<Self> {
        for k in c.keys() {
            let section = k.split('.').next().unwrap_or("");
            if ["run", "optim", "corpus"].contains(&section) && !RUN_KEYS.contains(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let mut cfg = match c.raw("model.preset") {
            Some(p) => {
                if let Some(k) = c.keys().find(|k| is_model_line(k) && *k != "model.preset") {
                    return Err(Error::Config(format!("`{k}` cannot be combined with model.preset")));
                }
                RunConfig::from_preset(p)?
            }
            None => RunConfig::new(ModelSpec::from_config(c)?),
        };
        let d = RunConfig::new(cfg.model.clone());
        cfg.seed = c.get_or("run.seed", d.seed)?;
        cfg.epochs = c.get_or("run.epochs", d.epochs)?;
        cfg.batch = c.get_or("run.batch", d.batch)?;
        cfg.loss = c.get_or("run.loss", d.loss)?;
        cfg.adam = AdamConfig {
            lr: c.get_or("optim.lr", d.adam.lr)?,
            beta1: c.get_or("optim.beta1", d.adam.beta1)?,
            beta2: c.get_or("optim.beta2", d.adam.beta2)?,
            eps: c.get_or("optim.eps", d.adam.eps)?,
        };
        cfg.corpus = CorpusPlan {
            spec: CorpusSpec {
                sample_rate: cfg.model.framing.sample_rate,
                duration_s: c.get_or("corpus.duration_s", d.corpus.spec.duration_s)?,
                snr_min_db: c.get_or("corpus.snr_min_db", d.corpus.spec.snr_min_db)?,
                snr_max_db: c.get_or("corpus.snr_max_db", d.corpus.spec.snr_max_db)?,
            },
            train: c.get_or("corpus.train", d.corpus.train)?,
            valid_per_snr: c.get_or("corpus.valid_per_snr", d.corpus.valid_per_snr)?,
            test_per_snr: c.get_or("corpus.test_per_snr", d.corpus.test_per_snr)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn is_model_line(l: &str) -> bool {
    ["model.", "framing.", "linear_stack.", "lstm_stack.", "unet.", "gcrn.", "dccrn."]
        .iter()
        .any(|p| l.starts_with(p))
}
