//! CSV persistence, chart output and overhead accounting.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::oui::Regime;

use super::svg;
use super::sweep::SweepResult;
use super::train::{EpochMetrics, MetricTrace};

/// Fixed leading columns of a trace CSV; `oui_layer_<l>` columns follow.
pub const TRACE_COLUMNS: [&str; 9] = [
    "epoch",
    "train_loss",
    "val_loss",
    "train_acc",
    "val_acc",
    "oui",
    "lr",
    "epoch_seconds",
    "oui_seconds",
];

pub const SWEEP_COLUMNS: [&str; 6] = ["lambda", "mva", "final_oui", "early_oui", "early_epoch", "regime"];

/// Mean over epochs of `oui_seconds / epoch_seconds` (an epoch with zero
/// elapsed time contributes 0).
pub fn overhead_report(trace: &MetricTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let sum: f64 = trace
        .epochs
        .iter()
        .map(|e| {
            if e.epoch_seconds > 0.0 {
                e.oui_seconds / e.epoch_seconds
            } else {
                0.0
            }
        })
        .sum();
    Ok(sum / trace.len() as f64)
}

pub fn trace_header(num_layers: usize) -> Vec<String> {
    TRACE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..num_layers).map(|l| format!("oui_layer_{l}")))
        .collect()
}

fn trace_row(e: &EpochMetrics) -> Vec<String> {
    let mut row = vec![
        e.epoch.to_string(),
        e.train_loss.to_string(),
        e.val_loss.to_string(),
        e.train_acc.to_string(),
        e.val_acc.to_string(),
        e.oui.to_string(),
        e.lr.to_string(),
        e.epoch_seconds.to_string(),
        e.oui_seconds.to_string(),
    ];
    row.extend(e.oui_layers.iter().map(f64::to_string));
    row
}

/// Trace CSV as a string. Floats use the shortest representation that
/// parses back to the same value.
pub fn trace_csv(trace: &MetricTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(trace.num_layers()))?;
    for e in &trace.epochs {
        w.write_record(trace_row(e))?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn parse_f64(field: &str, column: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad {column} value {field:?}")))
}

/// Parses a trace CSV. `weight_decay` is not stored in the file and comes
/// back as 0.
pub fn parse_trace_csv(text: &str) -> Result<MetricTrace> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let num_layers = header.len().saturating_sub(TRACE_COLUMNS.len());
    if header != trace_header(num_layers) {
        return Err(Error::Format(format!("unexpected trace header {header:?}")));
    }
    let mut epochs = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |c: usize| parse_f64(&rec[c], &header[c], line);
        let epoch = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: bad epoch {:?}", &rec[0])))?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss: f(1)?,
            val_loss: f(2)?,
            train_acc: f(3)?,
            val_acc: f(4)?,
            oui: f(5)?,
            lr: f(6)?,
            epoch_seconds: f(7)?,
            oui_seconds: f(8)?,
            oui_layers: (0..num_layers).map(|l| f(TRACE_COLUMNS.len() + l)).collect::<Result<_>>()?,
        });
    }
    Ok(MetricTrace {
        weight_decay: 0.0,
        epochs,
        decay_unstable: false,
    })
}

/// One line of a sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mva: f64,
    pub final_oui: f64,
    pub early_oui: f64,
    pub early_epoch: usize,
    pub regime: Regime,
}

pub fn sweep_rows(sweep: &SweepResult) -> Result<Vec<SweepRow>> {
    sweep
        .runs
        .iter()
        .map(|r| {
            Ok(SweepRow {
                lambda: r.lambda,
                mva: r.mva,
                final_oui: r.final_oui,
                early_oui: r.early_oui,
                early_epoch: r.early_epoch,
                regime: r.regime(sweep.band)?,
            })
        })
        .collect()
}

pub fn sweep_csv(sweep: &SweepResult) -> Result<String> {
    if sweep.runs.is_empty() {
        return Err(Error::EmptySweep);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for r in sweep_rows(sweep)? {
        w.write_record([
            r.lambda.to_string(),
            r.mva.to_string(),
            r.final_oui.to_string(),
            r.early_oui.to_string(),
            r.early_epoch.to_string(),
            r.regime.to_string(),
        ])?;
    }
    finish(w)
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_COLUMNS {
        return Err(Error::Format(format!("unexpected sweep header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |c: usize| parse_f64(&rec[c], SWEEP_COLUMNS[c], line);
        rows.push(SweepRow {
            lambda: f(0)?,
            mva: f(1)?,
            final_oui: f(2)?,
            early_oui: f(3)?,
            early_epoch: rec[4]
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: bad early_epoch {:?}", &rec[4])))?,
            regime: rec[5]
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: bad regime {:?}", &rec[5])))?,
        });
    }
    Ok(rows)
}

/// Writes `trace.csv` plus OUI and loss charts into `dir`.
pub fn write_trace(trace: &MetricTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let runs = [(trace.weight_decay, trace)];
    let files = [
        ("trace.csv", trace_csv(trace)?),
        ("oui_vs_epoch.svg", svg::oui_vs_epoch(&runs)),
        ("loss_curves.svg", svg::loss_curves(&runs)),
    ];
    write_all(dir, &files)
}

/// Writes `sweep.csv`, one `trace_<i>.csv` per run (in λ order) and the
/// three chart families into `dir`.
pub fn write_sweep(sweep: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = sweep_csv(sweep)?;
    fs::create_dir_all(dir)?;
    let runs: Vec<(f64, &MetricTrace)> = sweep.runs.iter().map(|r| (r.lambda, &r.trace)).collect();
    let mut files = vec![("sweep.csv".to_string(), summary)];
    for (i, r) in sweep.runs.iter().enumerate() {
        files.push((format!("trace_{i:02}.csv"), trace_csv(&r.trace)?));
    }
    files.push(("oui_vs_epoch.svg".into(), svg::oui_vs_epoch(&runs)));
    files.push(("loss_curves.svg".into(), svg::loss_curves(&runs)));
    files.push(("mva_oui_vs_lambda.svg".into(), svg::mva_oui_vs_lambda(sweep)));
    write_all(dir, &files)
}

fn write_all<S: AsRef<str>>(dir: &Path, files: &[(S, String)]) -> Result<Vec<PathBuf>> {
    files
        .iter()
        .map(|(name, body)| {
            let p = dir.join(name.as_ref());
            fs::write(&p, body)?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::SweepRun;
    use crate::oui::Band;

    fn metrics(epoch: usize, oui: f64, layers: usize) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_loss: 1.0 / 3.0,
            val_loss: 0.123456789012345,
            train_acc: 0.75,
            val_acc: 2.0 / 3.0,
            oui,
            oui_layers: vec![oui; layers],
            lr: 0.05 * 0.999,
            epoch_seconds: 1.0,
            oui_seconds: 0.036,
        }
    }

    fn trace(n: usize) -> MetricTrace {
        MetricTrace {
            weight_decay: 1e-3,
            epochs: (1..=n).map(|e| metrics(e, 0.7 + e as f64 * 1e-3, 2)).collect(),
            decay_unstable: false,
        }
    }

    #[test]
    fn overhead_examples() {
        assert!((overhead_report(&trace(3)).unwrap() - 0.036).abs() < 1e-15);
        let mut t = trace(2);
        for e in &mut t.epochs {
            e.oui_seconds = 0.0;
        }
        assert_eq!(overhead_report(&t).unwrap(), 0.0);
        assert!(matches!(overhead_report(&MetricTrace::default()), Err(Error::EmptyTrace)));
    }

    #[test]
    fn trace_header_is_exact() {
        let text = trace_csv(&trace(1)).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            "epoch,train_loss,val_loss,train_acc,val_acc,oui,lr,epoch_seconds,oui_seconds,oui_layer_0,oui_layer_1"
        );
    }

    #[test]
    fn trace_round_trip() {
        let t = trace(4);
        let back = parse_trace_csv(&trace_csv(&t).unwrap()).unwrap();
        assert_eq!(back.epochs, t.epochs);
    }

    #[test]
    fn sweep_round_trip_and_header() {
        let runs = [(1e-4, 0.9), (10f64.powf(-3.5), 0.7), (1e-2, 0.3)]
            .iter()
            .map(|&(l, o)| {
                let mut t = trace(3);
                t.weight_decay = l;
                for e in &mut t.epochs {
                    e.oui = o;
                }
                SweepRun::from_trace(l, t, 1).unwrap()
            })
            .collect();
        let s = SweepResult {
            runs,
            band: Band::default(),
            early_epoch: 1,
        };
        let text = sweep_csv(&s).unwrap();
        assert_eq!(text.lines().next().unwrap(), "lambda,mva,final_oui,early_oui,early_epoch,regime");
        let rows = parse_sweep_csv(&text).unwrap();
        assert_eq!(rows, sweep_rows(&s).unwrap());
        assert_eq!(rows[0].regime, Regime::Overfit);
        assert_eq!(rows[2].regime, Regime::Underfit);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let s = SweepResult {
            runs: vec![],
            band: Band::default(),
            early_epoch: 1,
        };
        assert!(matches!(sweep_csv(&s), Err(Error::EmptySweep)));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_sweep(&s, dir.path()), Err(Error::EmptySweep)));
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_trace_csv("epoch,loss\n1,2\n").is_err());
        assert!(parse_sweep_csv("lambda,mva\n").is_err());
    }

    #[test]
    fn write_trace_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_trace(&trace(3), dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        for f in files {
            assert!(f.exists());
        }
    }
}
