//! Whole-model parameter and MAC totals and cost tables.
//!
//! MACs count weight multiplications only: one per real multiply-add, four
//! per complex one. Biases, activations, gates and masks are excluded, and
//! no normalization layers exist in any family. Recurrent layers are charged
//! once per time step.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::Framing;
use crate::error::{Error, Result};
use crate::zoo::{LayerCost, Model};

pub const CONVENTION: &str = "weight multiply-accumulates only; complex multiply = 4 real MACs; \
biases, activations, gates and masks excluded; no normalization layers";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: String,
    pub entries: Vec<LayerCost>,
    pub params: usize,
    pub macs: u64,
    pub framing: Framing,
    pub duration_s: f64,
    pub frames: usize,
}

impl CostReport {
    pub fn from_entries(model: &str, entries: Vec<LayerCost>, framing: Framing, duration_s: f64, frames: usize) -> Self {
        CostReport {
            model: model.to_string(),
            params: entries.iter().map(|e| e.params).sum(),
            macs: entries.iter().map(|e| e.macs).sum(),
            entries,
            framing,
            duration_s,
            frames,
        }
    }

    pub fn bins(&self) -> usize {
        self.framing.bins()
    }
}

/// Parameter totals; the MAC column covers a single frame.
pub fn count_params(model: &Model) -> Result<CostReport> {
    let framing = model.spec().framing;
    let entries = model.layer_costs(1)?;
    Ok(CostReport::from_entries(model.name(), entries, framing, 0.0, 1))
}

/// Totals for a signal of `duration_s` seconds, `T = 1 + floor(N / hop)` frames.
pub fn count_macs(model: &Model, duration_s: f64, framing: &Framing) -> Result<CostReport> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(crate::error::invalid("count_macs", format!("duration must be positive, got {duration_s}")));
    }
    if *framing != model.spec().framing {
        return Err(Error::Framing {
            expected: model.spec().framing.label(),
            got: framing.label(),
        });
    }
    let frames = framing.frames(framing.samples(duration_s));
    let entries = model.layer_costs(frames)?;
    Ok(CostReport::from_entries(model.name(), entries, *framing, duration_s, frames))
}

/// Rounds to two decimals with an `M` suffix, the tables' parameter precision.
pub fn format_params(n: usize) -> String {
    format!("{:.2} M", n as f64 / 1e6)
}

/// `G` above one billion, otherwise `M`, two decimals.
pub fn format_macs(n: u64) -> String {
    if n >= 1_000_000_000 {
        format!("{:.2} G", n as f64 / 1e9)
    } else {
        format!("{:.2} M", n as f64 / 1e6)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Config(format!("unknown table format `{other}` (csv, markdown)"))),
        }
    }
}

pub const COST_COLUMNS: [&str; 6] = ["model", "params", "macs", "window", "hop", "duration_s"];

/// CSV carries exact integers; Markdown carries the rounded table values.
pub fn emit_cost_table(reports: &[CostReport], format: TableFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(crate::error::invalid("emit_cost_table", "no reports"));
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&COST_COLUMNS.join(","));
            out.push('\n');
            for r in reports {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.model, r.params, r.macs, r.framing.window_len, r.framing.hop, r.duration_s
                )
                .expect("write to String");
            }
        }
        TableFormat::Markdown => {
            writeln!(out, "| {} |", COST_COLUMNS.join(" | ")).expect("write to String");
            writeln!(out, "|{}", "---|".repeat(COST_COLUMNS.len())).expect("write to String");
            for r in reports {
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.model,
                    format_params(r.params),
                    format_macs(r.macs),
                    r.framing.window_len,
                    r.framing.hop,
                    r.duration_s
                )
                .expect("write to String");
            }
        }
    }
    Ok(out)
}

/// Cost reports for every model of a preset suite over a `duration_s` signal.
pub fn suite_costs(suite: &str, duration_s: f64) -> Result<Vec<CostReport>> {
    crate::zoo::suite(suite)?
        .iter()
        .map(|spec| {
            let mut store = crate::params::ParamStore::shape_only();
            let m = Model::build(spec, &mut store)?;
            count_macs(&m, duration_s, &spec.framing)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::zoo::preset;

    fn report(name: &str, secs: f64) -> CostReport {
        let spec = preset(name).unwrap();
        let m = Model::build(&spec, &mut ParamStore::shape_only()).unwrap();
        count_macs(&m, secs, &spec.framing).unwrap()
    }

    #[test]
    fn table_one_totals_round_to_printed_values() {
        let cases = [
            ("c_lstm", "23.35 M"),
            ("quasi_c_lstm", "23.35 M"),
            ("lstm", "23.62 M"),
            ("c_linear", "0.59 M"),
            ("r_linear", "0.59 M"),
        ];
        for (name, want) in cases {
            assert_eq!(format_params(report(name, 1.0).params), want, "{name}");
        }
        let lstm = report("lstm", 1.0);
        assert_eq!(lstm.frames, 126);
        assert_eq!(format_macs(lstm.macs), "2.97 G");
        assert_eq!(report("r_linear", 1.0).macs, 591_872 * 101);
    }

    #[test]
    fn lstm_macs_follow_closed_form() {
        // 3 layers of 4h(in+h) plus the output projection, per frame
        let h = 1024u64;
        let per_frame = 4 * h * (514 + h) + 2 * 4 * h * (2 * h) + h * 514;
        assert_eq!(report("lstm", 1.0).macs, per_frame * 126);
    }

    #[test]
    fn totals_are_entry_sums() {
        let r = report("gcrn_2b", 1.0);
        assert_eq!(r.params, r.entries.iter().map(|e| e.params).sum::<usize>());
        assert_eq!(r.macs, r.entries.iter().map(|e| e.macs).sum::<u64>());
        let empty = CostReport::from_entries("none", vec![], Framing::W512_H128, 1.0, 126);
        assert_eq!((empty.params, empty.macs), (0, 0));
    }

    #[test]
    fn macs_scale_with_duration() {
        for name in ["lstm", "c_linear", "gcrn_2a", "dccrn", "dcunet"] {
            let one = report(name, 1.0);
            let two = report(name, 2.0);
            let per_frame = one.macs as f64 / one.frames as f64;
            let diff = (two.macs as f64 - 2.0 * one.macs as f64).abs();
            assert!(diff <= 1.01 * per_frame, "{name}: {diff} vs frame {per_frame}");
            assert_eq!(one.params, two.params);
        }
    }

    #[test]
    fn count_params_is_duration_free() {
        let spec = preset("lstm").unwrap();
        let m = Model::build(&spec, &mut ParamStore::shape_only()).unwrap();
        let p = count_params(&m).unwrap();
        assert_eq!(p.params, 23_616_002);
        assert_eq!(p.frames, 1);
    }

    #[test]
    fn framing_and_duration_are_checked() {
        let spec = preset("lstm").unwrap();
        let m = Model::build(&spec, &mut ParamStore::shape_only()).unwrap();
        assert!(matches!(count_macs(&m, 1.0, &Framing::W320_H160), Err(Error::Framing { .. })));
        assert!(count_macs(&m, 0.0, &spec.framing).is_err());
        assert!(count_macs(&m, f64::NAN, &spec.framing).is_err());
    }

    #[test]
    fn tables_are_deterministic() {
        let rs = suite_costs("table5", 1.0).unwrap();
        for f in [TableFormat::Csv, TableFormat::Markdown] {
            let a = emit_cost_table(&rs, f).unwrap();
            assert_eq!(a, emit_cost_table(&rs, f).unwrap());
            assert_eq!(a.lines().count(), if f == TableFormat::Csv { 3 } else { 4 });
        }
        let one = emit_cost_table(&rs[..1], TableFormat::Csv).unwrap();
        assert_eq!(one.lines().next().unwrap(), "model,params,macs,window,hop,duration_s");
        assert_eq!(one.lines().count(), 2);
        assert!(emit_cost_table(&[], TableFormat::Csv).is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(format_params(593_082), "0.59 M");
        assert_eq!(format_macs(119_409_472), "119.41 M");
        assert_eq!(format_macs(5_875_178_400), "5.88 G");
        assert_eq!("md".parse::<TableFormat>().unwrap(), TableFormat::Markdown);
        assert!("xml".parse::<TableFormat>().is_err());
    }
}
