//! `oui-lab` command-line driver.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use oui_core::harness::{
    early_sweep, estimator_study, overhead_report, parse_sweep_csv, parse_trace_csv, recommend_from_readings,
    recommend_wd, svg, sweep, write_sweep, write_trace, MetricTrace, SweepResult, SweepRun, TrainConfig, Trainer,
};
use oui_core::oui::PairMode;

pub use config::{apply_override, parse_config, parse_with_overrides, ConfigError};

/// Share of epoch time spent on OUI reported for the reference setup.
pub const REFERENCE_OVERHEAD: f64 = 0.036;

#[derive(Debug, Parser)]
#[command(name = "oui-lab", version, about = "Train, sweep and inspect networks with the OUI indicator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Dotted-path override applied after the file, e.g. optimizer.momentum=0.8.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its trace.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per weight decay and write the sweep summary.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weight decays (default: the config's sweep grid).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Recommend a weight decay from early OUI readings.
    Recommend {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Use the early OUI column of an existing sweep CSV instead of training.
        #[arg(long)]
        from_sweep: Option<PathBuf>,
    },
    /// Compare the sampled OUI estimator with the exhaustive value on recorded patterns.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Epochs trained before recording (default: half the schedule).
        #[arg(long)]
        at_epoch: Option<usize>,
        /// Pairs per estimate (default: the config's sampled pair count).
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
    },
    /// Summarize a trace or sweep directory and redraw its charts.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding trace.csv or sweep.csv.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] oui_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Io(_) => 2,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &Common) -> Result<TrainConfig, CliError> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    Ok(parse_with_overrides(&text, &common.overrides)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(oui_core::Error::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn grid(cfg: &TrainConfig, lambdas: Option<Vec<f64>>) -> Vec<f64> {
    lambdas.unwrap_or_else(|| cfg.sweep.lambdas())
}

fn execute(command: Command, out: &mut impl Write) -> Result<(), CliError> {
    match command {
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            fs::create_dir_all(&common.out_dir)?;
            write_json(&common.out_dir.join("config.json"), &cfg)?;
            let trace = oui_core::harness::train(&cfg)?;
            write_trace(&trace, &common.out_dir)?;
            if let Some(last) = trace.last() {
                writeln!(
                    out,
                    "epochs {} | train_loss {:.4} val_loss {:.4} val_acc {:.4} | mva {:.4} | oui {:.4}",
                    trace.len(),
                    last.train_loss,
                    last.val_loss,
                    last.val_acc,
                    trace.mva().unwrap_or(f64::NAN),
                    last.oui
                )?;
                writeln!(out, "oui overhead {:.4} of epoch time", overhead_report(&trace)?)?;
            } else {
                writeln!(out, "epochs 0")?;
            }
            if trace.decay_unstable {
                writeln!(out, "warning: 2·lr·weight_decay >= 1 at peak learning rate")?;
            }
            writeln!(out, "wrote {}", common.out_dir.display())?;
        }
        Command::Sweep { common, lambdas } => {
            let cfg = load_config(&common)?;
            let lambdas = grid(&cfg, lambdas);
            let result = sweep(&cfg, &lambdas)?;
            fs::create_dir_all(&common.out_dir)?;
            write_json(&common.out_dir.join("config.json"), &cfg)?;
            write_sweep(&result, &common.out_dir)?;
            let rec = recommend_wd(&result)?;
            write_json(&common.out_dir.join("recommendation.json"), &rec)?;
            print_sweep(out, &result)?;
            writeln!(out, "recommended weight decay {} (in band: {})", rec.lambda_star, rec.in_band)?;
            writeln!(out, "wrote {}", common.out_dir.display())?;
        }
        Command::Recommend {
            common,
            lambdas,
            from_sweep,
        } => {
            let cfg = load_config(&common)?;
            fs::create_dir_all(&common.out_dir)?;
            let rec = match from_sweep {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                    let rows = parse_sweep_csv(&text)?;
                    let readings: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.early_oui)).collect();
                    let early = rows.first().map_or(cfg.early_epoch(), |r| r.early_epoch);
                    recommend_from_readings(&readings, cfg.oui_band, early)?
                }
                None => {
                    let result = early_sweep(&cfg, &grid(&cfg, lambdas))?;
                    for (i, r) in result.runs.iter().enumerate() {
                        fs::write(
                            common.out_dir.join(format!("early_trace_{i:02}.csv")),
                            oui_core::harness::trace_csv(&r.trace)?,
                        )?;
                    }
                    recommend_wd(&result)?
                }
            };
            write_json(&common.out_dir.join("recommendation.json"), &rec)?;
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&rec).map_err(oui_core::Error::from)?
            )?;
        }
        Command::Estimate {
            common,
            at_epoch,
            pairs,
            trials,
            margin,
        } => {
            let cfg = load_config(&common)?;
            let at = at_epoch.unwrap_or(cfg.epochs.div_ceil(2));
            if at > cfg.epochs {
                return Err(CliError::Usage(format!(
                    "--at-epoch {at} exceeds the configured {} epochs",
                    cfg.epochs
                )));
            }
            let num_pairs = pairs.unwrap_or(match cfg.oui.pairs {
                PairMode::Sampled(n) => n,
                PairMode::Exhaustive => 28,
            });
            let mut trainer = Trainer::new(&cfg)?;
            for _ in 0..at {
                trainer.run_epoch()?;
            }
            let records = trainer.record_patterns(cfg.batch_size)?;
            if records.is_empty() {
                return Err(oui_core::Error::InsufficientSamples(0).into());
            }
            let study = estimator_study(&records, num_pairs, trials, margin, cfg.seeds.oui)?;
            fs::create_dir_all(&common.out_dir)?;
            write_json(&common.out_dir.join("estimate.json"), &study)?;
            writeln!(
                out,
                "epoch {at} | {} batches of {} | {} pairs | {} trials",
                records.len(),
                cfg.batch_size,
                num_pairs,
                trials
            )?;
            writeln!(
                out,
                "within ±{margin}: {:.4} | mean bias {:.5} (se {:.5})",
                study.within_margin, study.mean_bias, study.bias_std_error
            )?;
            for (q, v) in &study.abs_error_quantiles {
                writeln!(out, "|error| q{:<5} {v:.5}", q * 100.0)?;
            }
            for (l, (s, n)) in study.layer_sigma.iter().zip(&study.layer_sample_size).enumerate() {
                writeln!(out, "layer {l}: sigma {s:.4} -> {n} pairs at 95%")?;
            }
        }
        Command::Report { common, input } => {
            fs::create_dir_all(&common.out_dir)?;
            if input.join("sweep.csv").exists() {
                let result = load_sweep_dir(&input, &load_config(&common)?)?;
                print_sweep(out, &result)?;
                for r in &result.runs {
                    writeln!(
                        out,
                        "λ {:<10} overhead {:.4}",
                        r.lambda,
                        overhead_report(&r.trace)?
                    )?;
                }
                let runs: Vec<(f64, &MetricTrace)> = result.runs.iter().map(|r| (r.lambda, &r.trace)).collect();
                fs::write(common.out_dir.join("oui_vs_epoch.svg"), svg::oui_vs_epoch(&runs))?;
                fs::write(common.out_dir.join("loss_curves.svg"), svg::loss_curves(&runs))?;
                fs::write(common.out_dir.join("mva_oui_vs_lambda.svg"), svg::mva_oui_vs_lambda(&result))?;
            } else if input.join("trace.csv").exists() {
                let trace = parse_trace_csv(&fs::read_to_string(input.join("trace.csv"))?)?;
                let last = trace.last().ok_or(oui_core::Error::EmptyTrace)?;
                writeln!(
                    out,
                    "epochs {} | final val_acc {:.4} | mva {:.4} | final oui {:.4}",
                    trace.len(),
                    last.val_acc,
                    trace.mva().unwrap_or(f64::NAN),
                    last.oui
                )?;
                writeln!(
                    out,
                    "oui overhead {:.4} of epoch time (reference setup: {REFERENCE_OVERHEAD})",
                    overhead_report(&trace)?
                )?;
                let runs = [(trace.weight_decay, &trace)];
                fs::write(common.out_dir.join("oui_vs_epoch.svg"), svg::oui_vs_epoch(&runs))?;
                fs::write(common.out_dir.join("loss_curves.svg"), svg::loss_curves(&runs))?;
            } else {
                return Err(CliError::Usage(format!(
                    "{} holds neither sweep.csv nor trace.csv",
                    input.display()
                )));
            }
        }
    }
    Ok(())
}

fn load_sweep_dir(dir: &Path, cfg: &TrainConfig) -> Result<SweepResult, CliError> {
    let rows = parse_sweep_csv(&fs::read_to_string(dir.join("sweep.csv"))?)?;
    let early_epoch = rows.first().map_or(cfg.early_epoch(), |r| r.early_epoch);
    let runs = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut trace = parse_trace_csv(&fs::read_to_string(dir.join(format!("trace_{i:02}.csv")))?)?;
            trace.weight_decay = row.lambda;
            Ok(SweepRun {
                lambda: row.lambda,
                trace,
                mva: row.mva,
                final_oui: row.final_oui,
                early_oui: row.early_oui,
                early_epoch: row.early_epoch,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(SweepResult {
        runs,
        band: cfg.oui_band,
        early_epoch,
    })
}

fn print_sweep(out: &mut impl Write, result: &SweepResult) -> Result<(), CliError> {
    writeln!(out, "{:<12} {:>7} {:>9} {:>9}  regime", "lambda", "mva", "final_oui", "early_oui")?;
    for r in &result.runs {
        writeln!(
            out,
            "{:<12.4e} {:>7.4} {:>9.4} {:>9.4}  {}",
            r.lambda,
            r.mva,
            r.final_oui,
            r.early_oui,
            r.regime(result.band)?
        )?;
    }
    Ok(())
}
