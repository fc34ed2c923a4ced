use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::TableFormat;
use crate::error::{Error, Result};
use crate::params::{ParamRecord, ParamStore};
use crate::zoo::{Model, ModelSpec};

/// Mean SI-SDR of one fixed-SNR group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub snr_db: f64,
    pub count: usize,
    pub noisy: f64,
    pub enhanced: f64,
}

impl Bucket {
    pub fn improvement(&self) -> f64 {
        self.enhanced - self.noisy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss; absent for the untrained evaluation at epoch 0.
    pub train_loss: Option<f64>,
    pub valid: Vec<Bucket>,
    /// Mean enhanced SI-SDR over the whole validation split.
    pub valid_mean: f64,
    pub best: bool,
}

/// Line-delimited per-epoch records. Wall-clock times are kept in a
/// separate file so identical runs produce identical logs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub model: String,
    pub epochs: Vec<EpochRecord>,
}

impl RunLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(&Tagged { model: &self.model, record: e })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut log = RunLog::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let t: TaggedOwned = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if log.epochs.is_empty() {
                log.model = t.model;
            } else if t.model != log.model {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("record for `{}` in a log of `{}`", t.model, log.model),
                });
            }
            if log.epochs.last().is_some_and(|p| p.epoch >= t.record.epoch) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "epoch indices must increase".into(),
                });
            }
            log.epochs.push(t.record);
        }
        Ok(log)
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().rev().find(|e| e.best)
    }
}

#[derive(Serialize)]
struct Tagged<'a> {
    model: &'a str,
    #[serde(flatten)]
    record: &'a EpochRecord,
}

#[derive(Deserialize)]
struct TaggedOwned {
    model: String,
    #[serde(flatten)]
    record: EpochRecord,
}

/// Best-validation parameters together with the spec they belong to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: String,
    pub epoch: usize,
    pub valid_mean: f64,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture(model: &Model, store: &ParamStore, epoch: usize, valid_mean: f64) -> Result<Self> {
        Ok(Checkpoint {
            spec: model.spec().to_text(),
            epoch,
            valid_mean,
            params: store.export()?,
        })
    }

    pub fn restore(&self) -> Result<(Model, ParamStore)> {
        let spec = ModelSpec::from_text(&self.spec)?;
        let mut store = ParamStore::shape_only();
        let model = Model::build(&spec, &mut store)?;
        store.import(&self.params)?;
        Ok((model, store))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Per-bucket SI-SDR of one model on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub model: String,
    pub buckets: Vec<Bucket>,
}

impl EvalTable {
    pub fn bucket(&self, snr_db: f64) -> Option<&Bucket> {
        self.buckets.iter().find(|b| b.snr_db == snr_db)
    }

    pub fn render(&self, format: TableFormat) -> String {
        let cols = ["model", "snr_db", "count", "noisy_si_sdr", "enhanced_si_sdr", "improvement"];
        let mut out = String::new();
        let row = |cells: &[String]| match format {
            TableFormat::Csv => cells.join(","),
            TableFormat::Markdown => format!("| {} |", cells.join(" | ")),
        };
        let head: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
        writeln!(out, "{}", row(&head)).expect("write to String");
        if format == TableFormat::Markdown {
            writeln!(out, "|{}", "---|".repeat(cols.len())).expect("write to String");
        }
        for b in &self.buckets {
            let cells = [
                self.model.clone(),
                format!("{}", b.snr_db),
                b.count.to_string(),
                format!("{:.4}", b.noisy),
                format!("{:.4}", b.enhanced),
                format!("{:.4}", b.improvement()),
            ];
            writeln!(out, "{}", row(&cells)).expect("write to String");
        }
        out
    }
}
