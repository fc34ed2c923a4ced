use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cplxbench_core::accounting::{count_macs, emit_cost_table, suite_costs, TableFormat, CONVENTION};
use cplxbench_core::train::{
    collect_runs, comparison_table, evaluate, train, Checkpoint, RunConfig, CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE,
    LOG_FILE,
};
use cplxbench_core::zoo::{suite_names, Model};
use cplxbench_core::{Error, ParamStore};

#[derive(Parser)]
#[command(name = "cplxbench", version, about = "Real- versus complex-valued speech enhancement benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parameter and MAC table for a preset suite, a single preset or a config file.
    Count {
        #[command(flatten)]
        src: Source,
        /// Signal length the MACs are counted over.
        #[arg(long, default_value_t = 1.0)]
        duration_s: f64,
        #[arg(long, default_value = "csv")]
        format: TableFormat,
    },
    /// Train a model on the synthetic corpus and keep the best checkpoint.
    Train {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured epoch budget.
        #[arg(long)]
        epochs: Option<usize>,
        /// Run directory for the config, log and checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the best checkpoint of a run on the test split.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate under a different run config instead of the stored one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: TableFormat,
    },
    /// Join evaluated runs under a directory into one comparison table.
    Report {
        /// Directory holding run directories.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: TableFormat,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Run or model config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name, or for `count` also a suite name.
    #[arg(long)]
    preset: Option<String>,
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_config(src: &Source) -> Result<RunConfig, Error> {
    match (&src.config, &src.preset) {
        (Some(path), _) => RunConfig::from_text(&read(path)?),
        (None, Some(name)) => RunConfig::from_preset(name),
        (None, None) => Err(Error::Config("one of --config or --preset is required".into())),
    }
}

fn echo(text: &str) {
    for line in text.lines() {
        eprintln!("# {line}");
    }
}

fn count(src: &Source, duration_s: f64, format: TableFormat) -> Result<(), Error> {
    let reports = match src.preset.as_deref() {
        Some(name) if suite_names().contains(&name) => {
            echo(&format!("suite = {name}\nduration_s = {duration_s}"));
            suite_costs(name, duration_s)?
        }
        _ => {
            let cfg = load_config(src)?;
            echo(&cfg.model.to_text());
            let model = Model::build(&cfg.model, &mut ParamStore::shape_only())?;
            vec![count_macs(&model, duration_s, &cfg.model.framing)?]
        }
    };
    echo(&format!("macs = {CONVENTION}"));
    print!("{}", emit_cost_table(&reports, format)?);
    Ok(())
}

fn run_train(src: &Source, seed: Option<u64>, epochs: Option<usize>, out: &Path) -> Result<(), Error> {
    let mut cfg = load_config(src)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    echo(&cfg.to_text());
    let outcome = train(&cfg, Some(out))?;
    let last = outcome.log.epochs.last().expect("epoch 0 is always logged");
    println!(
        "trained {} for {} epochs; best epoch {} with validation SI-SDR {:.4} dB; last {:.4} dB",
        cfg.model.name, cfg.epochs, outcome.best.epoch, outcome.best.valid_mean, last.valid_mean
    );
    println!("wrote {}, {} and {} to {}", CONFIG_FILE, LOG_FILE, CHECKPOINT_FILE, out.display());
    Ok(())
}

fn run_eval(out: &Path, config: Option<&Path>, format: TableFormat) -> Result<(), Error> {
    let cfg = RunConfig::from_text(&read(&config.map_or_else(|| out.join(CONFIG_FILE), Path::to_path_buf))?)?;
    echo(&cfg.to_text());
    let checkpoint = Checkpoint::load(&out.join(CHECKPOINT_FILE))
        .map_err(|e| Error::Config(format!("{}: {e}", out.join(CHECKPOINT_FILE).display())))?;
    let table = evaluate(&cfg, &checkpoint)?;
    std::fs::write(out.join(EVAL_FILE), serde_json::to_string(&table)?)?;
    print!("{}", table.render(format));
    Ok(())
}

fn report(out: &Path, format: TableFormat) -> Result<(), Error> {
    let runs = collect_runs(out)?;
    echo(&format!("runs = {}", runs.iter().map(|r| r.model.as_str()).collect::<Vec<_>>().join(", ")));
    print!("{}", comparison_table(&runs, format)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Count { src, duration_s, format } => count(src, *duration_s, *format),
        Cmd::Train { src, seed, epochs, out } => run_train(src, *seed, *epochs, out),
        Cmd::Eval { out, config, format } => run_eval(out, config.as_deref(), *format),
        Cmd::Report { out, format } => report(out, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
