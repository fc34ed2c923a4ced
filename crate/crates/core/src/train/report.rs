use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::log::{EvalTable, RunLog};
use super::run::{CONFIG_FILE, LOG_FILE};
use crate::accounting::{count_macs, format_macs, format_params, TableFormat};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::zoo::{Model, ModelSpec};

pub const EVAL_FILE: &str = "eval.json";

/// Size and cost of a real/complex pair over a one-second signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub real_params: usize,
    pub complex_params: usize,
    pub real_macs: u64,
    pub complex_macs: u64,
}

impl PairCheck {
    /// Relative parameter gap, normalized by the larger model.
    pub fn param_gap(&self) -> f64 {
        let (a, b) = (self.real_params as f64, self.complex_params as f64);
        (a - b).abs() / a.max(b)
    }

    pub fn mac_ratio(&self) -> f64 {
        self.complex_macs as f64 / self.real_macs as f64
    }
}

fn costs(spec: &ModelSpec) -> Result<(usize, u64)> {
    let m = Model::build(spec, &mut ParamStore::shape_only())?;
    let r = count_macs(&m, 1.0, &spec.framing)?;
    Ok((r.params, r.macs))
}

/// Requires parameter parity within `tolerance` and strictly higher complex MACs.
pub fn check_pair(real: &ModelSpec, complex: &ModelSpec, tolerance: f64) -> Result<PairCheck> {
    let (rp, rm) = costs(real)?;
    let (cp, cm) = costs(complex)?;
    let pc = PairCheck {
        real_params: rp,
        complex_params: cp,
        real_macs: rm,
        complex_macs: cm,
    };
    if pc.param_gap() > tolerance {
        return Err(Error::Config(format!(
            "`{}` ({rp}) and `{}` ({cp}) differ by {:.2}% in parameters, over {:.2}%",
            real.name,
            complex.name,
            100.0 * pc.param_gap(),
            100.0 * tolerance
        )));
    }
    if cm <= rm {
        return Err(Error::Config(format!(
            "`{}` does not cost more MACs than `{}` ({cm} vs {rm})",
            complex.name, real.name
        )));
    }
    Ok(pc)
}

/// One trained and evaluated run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub model: String,
    pub params: usize,
    pub macs: u64,
    pub best_epoch: usize,
    pub eval: EvalTable,
}

impl RunSummary {
    pub fn new(spec: &ModelSpec, log: &RunLog, eval: EvalTable) -> Result<Self> {
        let (params, macs) = costs(spec)?;
        Ok(RunSummary {
            model: spec.name.clone(),
            params,
            macs,
            best_epoch: log.best().map_or(0, |e| e.epoch),
            eval,
        })
    }

    /// Reads a run directory written by training and evaluation.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Config(format!("{}: {e}", dir.join(name).display())))
        };
        let cfg = super::config::RunConfig::from_text(&read(CONFIG_FILE)?)?;
        let log = RunLog::from_jsonl(&read(LOG_FILE)?)?;
        let eval: EvalTable = serde_json::from_str(&read(EVAL_FILE)?)?;
        Self::new(&cfg.model, &log, eval)
    }
}

/// Every run directory directly under `root`, sorted by name.
pub fn collect_runs(root: &Path) -> Result<Vec<RunSummary>> {
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::Config(format!("{}: {e}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(EVAL_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("no evaluated runs under {}", root.display())));
    }
    dirs.iter().map(|d| RunSummary::load(d)).collect()
}

/// Per-bucket scores of every run, then `|ΔSI-SDR|` of each run against the first.
pub fn comparison_table(runs: &[RunSummary], format: TableFormat) -> Result<String> {
    let first = runs.first().ok_or_else(|| Error::Config("no runs to compare".into()))?;
    let mut out = String::new();
    let row = |cells: &[String]| match format {
        TableFormat::Csv => cells.join(","),
        TableFormat::Markdown => format!("| {} |", cells.join(" | ")),
    };
    let rule = |n: usize| format!("|{}", "---|".repeat(n));
    let cols = ["model", "params", "macs", "best_epoch", "snr_db", "noisy_si_sdr", "enhanced_si_sdr", "improvement"];
    let s = |v: &[&str]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    writeln!(out, "{}", row(&s(&cols))).expect("write to String");
    if format == TableFormat::Markdown {
        writeln!(out, "{}", rule(cols.len())).expect("write to String");
    }
    for r in runs {
        let (p, m) = match format {
            TableFormat::Csv => (r.params.to_string(), r.macs.to_string()),
            TableFormat::Markdown => (format_params(r.params), format_macs(r.macs)),
        };
        for b in &r.eval.buckets {
            let cells = [
                r.model.clone(),
                p.clone(),
                m.clone(),
                r.best_epoch.to_string(),
                format!("{}", b.snr_db),
                format!("{:.4}", b.noisy),
                format!("{:.4}", b.enhanced),
                format!("{:.4}", b.improvement()),
            ];
            writeln!(out, "{}", row(&cells)).expect("write to String");
        }
    }
    if runs.len() > 1 {
        out.push('\n');
        let cols = ["reference", "model", "snr_db", "abs_delta_si_sdr"];
        writeln!(out, "{}", row(&s(&cols))).expect("write to String");
        if format == TableFormat::Markdown {
            writeln!(out, "{}", rule(cols.len())).expect("write to String");
        }
        for r in &runs[1..] {
            for b in &r.eval.buckets {
                let a = first
                    .eval
                    .bucket(b.snr_db)
                    .ok_or_else(|| Error::Config(format!("`{}` has no {} dB bucket", first.model, b.snr_db)))?;
                let cells = [
                    first.model.clone(),
                    r.model.clone(),
                    format!("{}", b.snr_db),
                    format!("{:.4}", (b.enhanced - a.enhanced).abs()),
                ];
                writeln!(out, "{}", row(&cells)).expect("write to String");
            }
        }
    }
    Ok(out)
}
