//! Run artifacts, summaries, plot data and SVG figures.
//!
//! A run directory holds, per run `k`:
//!
//! - `metrics_run<k>.json`: the full [`RunMetrics`] record
//! - `curves_run<k>.csv`: `epoch,train_loss,train_auc,val_auc`
//!
//! plus an optional `provenance.json` that is echoed into the summary.
//! Missing AUC values (single-class edge sets) are written as empty CSV
//! cells and JSON `null`.
//!
//! `summary.json` schema (version 1):
//!
//! ```text
//! { schema_version, runs, epochs,
//!   test_auc: {mean, var} | null, test_accuracy: {mean, var},
//!   per_run: [{run, seed, split_seed, test_auc, test_accuracy}],
//!   curves: [{epoch, train_loss: {mean, var}, train_auc: {..} | null, val_auc: {..} | null}],
//!   provenance: {...} | null }
//! ```
//!
//! Variances use the `n - 1` denominator and are 0 for a single run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::{aggregate, Aggregate, EpochAggregate, RunMetrics, Stat};

pub const SUMMARY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no completed runs in {0}")]
    MissingRuns(PathBuf),
    #[error("run set {label}: expected {expected} epochs, found {found}")]
    EpochMismatch {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("need at least two run sets to compare")]
    TooFewSets,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn curves_csv(run: &RunMetrics) -> String {
    let mut s = String::from("epoch,train_loss,train_auc,val_auc\n");
    for e in &run.epochs {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            e.epoch,
            e.train_loss,
            cell(e.train_auc),
            cell(e.val_auc)
        );
    }
    s
}

/// Writes `metrics_run<k>.json` and `curves_run<k>.csv`.
pub fn save_run(dir: &Path, k: usize, run: &RunMetrics) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(run).expect("metrics serialize");
    write_file(&dir.join(format!("metrics_run{k}.json")), &(json + "\n"))?;
    write_file(&dir.join(format!("curves_run{k}.csv")), &curves_csv(run))
}

/// Loads every `metrics_run<k>.json` in `dir`, ordered by `k`.
pub fn load_runs(dir: &Path) -> Result<Vec<RunMetrics>, ReportError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ReportError::MissingRuns(dir.to_path_buf()))
        }
        Err(e) => return Err(io_err(dir)(e)),
    };
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(k) = name
            .strip_prefix("metrics_run")
            .and_then(|r| r.strip_suffix(".json"))
            .and_then(|k| k.parse().ok())
        {
            found.push((k, path));
        }
    }
    if found.is_empty() {
        return Err(ReportError::MissingRuns(dir.to_path_buf()));
    }
    found.sort();
    found
        .into_iter()
        .map(|(_, path)| {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            serde_json::from_str(&text).map_err(|e| ReportError::Format {
                path: path.clone(),
                msg: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub test_auc: Option<f64>,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub runs: usize,
    pub epochs: usize,
    pub test_auc: Option<Stat>,
    pub test_accuracy: Stat,
    pub per_run: Vec<RunSummary>,
    pub curves: Vec<EpochAggregate>,
    pub provenance: Option<serde_json::Value>,
}

fn check_epochs(label: &str, runs: &[RunMetrics]) -> Result<usize, ReportError> {
    let expected = runs[0].epochs.len();
    match runs.iter().find(|r| r.epochs.len() != expected) {
        Some(r) => Err(ReportError::EpochMismatch {
            label: label.to_string(),
            expected,
            found: r.epochs.len(),
        }),
        None => Ok(expected),
    }
}

pub fn summarize(runs: &[RunMetrics], provenance: Option<serde_json::Value>) -> Summary {
    let Aggregate {
        runs: n,
        epochs,
        test_auc,
        test_accuracy,
    } = aggregate(runs);
    Summary {
        schema_version: SUMMARY_VERSION,
        runs: n,
        epochs: epochs.len(),
        test_auc,
        test_accuracy,
        per_run: runs
            .iter()
            .enumerate()
            .map(|(k, r)| RunSummary {
                run: k,
                seed: r.seed,
                split_seed: r.split_seed,
                test_auc: r.test_auc,
                test_accuracy: r.test_accuracy,
            })
            .collect(),
        curves: epochs,
        provenance,
    }
}

/// All runs' curves followed by `mean` and `var` rows per epoch.
pub fn combined_curves_csv(runs: &[RunMetrics], summary: &Summary) -> String {
    let mut s = String::from("run,epoch,train_loss,train_auc,val_auc\n");
    for (k, r) in runs.iter().enumerate() {
        for e in &r.epochs {
            let _ = writeln!(
                s,
                "{k},{},{},{},{}",
                e.epoch,
                e.train_loss,
                cell(e.train_auc),
                cell(e.val_auc)
            );
        }
    }
    for (tag, pick) in [("mean", (|x: &Stat| x.mean) as fn(&Stat) -> f64), ("var", |x: &Stat| x.var)] {
        for e in &summary.curves {
            let _ = writeln!(
                s,
                "{tag},{},{},{},{}",
                e.epoch,
                pick(&e.train_loss),
                cell(e.train_auc.as_ref().map(pick)),
                cell(e.val_auc.as_ref().map(pick))
            );
        }
    }
    s
}

fn dat(points: impl Iterator<Item = (usize, Option<f64>)>) -> String {
    let mut s = String::new();
    for (x, y) in points {
        if let Some(y) = y {
            let _ = writeln!(s, "{x} {y}");
        }
    }
    s
}

/// One series of the summary's per-epoch curves.
#[derive(Debug, Clone, Copy)]
enum Series {
    LossMean,
    LossVar,
    TrainAucMean,
    ValAucMean,
    ValAucVar,
}

fn series(summary: &Summary, which: Series) -> Vec<(usize, Option<f64>)> {
    summary
        .curves
        .iter()
        .map(|e| {
            let y = match which {
                Series::LossMean => Some(e.train_loss.mean),
                Series::LossVar => Some(e.train_loss.var),
                Series::TrainAucMean => e.train_auc.as_ref().map(|s| s.mean),
                Series::ValAucMean => e.val_auc.as_ref().map(|s| s.mean),
                Series::ValAucVar => e.val_auc.as_ref().map(|s| s.var),
            };
            (e.epoch, y)
        })
        .collect()
}

fn points(s: &[(usize, Option<f64>)]) -> Vec<(f64, f64)> {
    s.iter()
        .filter_map(|&(x, y)| y.map(|y| (x as f64, y)))
        .collect()
}

/// Reads runs from `run_dir` and writes `summary.json`, `curves.csv`, plot
/// data (`loss.dat`, `loss_var.dat`, `train_auc.dat`, `auc.dat`,
/// `auc_var.dat`) and figures (`loss.svg`, `auc.svg`, `auc_variance.svg`)
/// into `out_dir`.
pub fn write_report(run_dir: &Path, out_dir: &Path) -> Result<Summary, ReportError> {
    let runs = load_runs(run_dir)?;
    check_epochs(&run_dir.display().to_string(), &runs)?;
    let prov_path = run_dir.join("provenance.json");
    let provenance = match fs::read_to_string(&prov_path) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| ReportError::Format {
            path: prov_path.clone(),
            msg: e.to_string(),
        })?),
        Err(_) => None,
    };
    let summary = summarize(&runs, provenance);
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out_dir.join("summary.json"), &(json + "\n"))?;
    write_file(&out_dir.join("curves.csv"), &combined_curves_csv(&runs, &summary))?;

    let files = [
        ("loss.dat", Series::LossMean),
        ("loss_var.dat", Series::LossVar),
        ("train_auc.dat", Series::TrainAucMean),
        ("auc.dat", Series::ValAucMean),
        ("auc_var.dat", Series::ValAucVar),
    ];
    for (name, which) in files {
        write_file(&out_dir.join(name), &dat(series(&summary, which).into_iter()))?;
    }

    let per_run = |f: fn(&crate::train::EpochMetrics) -> Option<f64>| {
        runs.iter()
            .enumerate()
            .map(|(k, r)| {
                let pts = r
                    .epochs
                    .iter()
                    .filter_map(|e| f(e).map(|y| (e.epoch as f64, y)))
                    .collect();
                (format!("run {k}"), pts)
            })
            .collect::<Vec<_>>()
    };
    let mut loss = per_run(|e| Some(e.train_loss));
    loss.push(("mean".into(), points(&series(&summary, Series::LossMean))));
    write_file(
        &out_dir.join("loss.svg"),
        &line_chart("Training loss", "epoch", "BCE loss", &loss),
    )?;
    let mut auc = per_run(|e| e.val_auc);
    auc.push(("mean val".into(), points(&series(&summary, Series::ValAucMean))));
    auc.push(("mean train".into(), points(&series(&summary, Series::TrainAucMean))));
    write_file(
        &out_dir.join("auc.svg"),
        &line_chart("AUC", "epoch", "AUC", &auc),
    )?;
    write_file(
        &out_dir.join("auc_variance.svg"),
        &line_chart(
            "Validation AUC variance across runs",
            "epoch",
            "variance",
            &[("val AUC var".into(), points(&series(&summary, Series::ValAucVar)))],
        ),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetResult {
    pub label: String,
    pub runs: usize,
    pub test_auc: Option<Stat>,
    pub test_accuracy: Stat,
    pub final_val_auc: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetDelta {
    pub label: String,
    pub against: String,
    pub test_auc: Option<f64>,
    pub test_accuracy: f64,
    pub final_val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub epochs: usize,
    pub sets: Vec<SetResult>,
    /// Every set after the first, minus the first.
    pub deltas: Vec<SetDelta>,
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn diff(a: Option<&Stat>, b: Option<&Stat>) -> Option<f64> {
    Some(a?.mean - b?.mean)
}

/// Side-by-side comparison of labeled run directories. Writes
/// `compare.json`, `compare.csv` (per-epoch means per set and deltas to the
/// first set), overlaid plot data `<label>_loss.dat` / `<label>_auc.dat`,
/// and `compare_loss.svg` / `compare_auc.svg`.
pub fn compare(sets: &[(String, PathBuf)], out_dir: &Path) -> Result<Comparison, ReportError> {
    if sets.len() < 2 {
        return Err(ReportError::TooFewSets);
    }
    let mut summaries = Vec::new();
    let mut epochs = None;
    for (label, dir) in sets {
        let runs = load_runs(dir)?;
        let n = check_epochs(label, &runs)?;
        match epochs {
            None => epochs = Some(n),
            Some(e) if e != n => {
                return Err(ReportError::EpochMismatch {
                    label: label.clone(),
                    expected: e,
                    found: n,
                })
            }
            _ => {}
        }
        summaries.push((label.clone(), summarize(&runs, None)));
    }
    let epochs = epochs.expect("at least two sets");

    let results: Vec<SetResult> = summaries
        .iter()
        .map(|(label, s)| SetResult {
            label: label.clone(),
            runs: s.runs,
            test_auc: s.test_auc.clone(),
            test_accuracy: s.test_accuracy.clone(),
            final_val_auc: s.curves.last().and_then(|e| e.val_auc.clone()),
        })
        .collect();
    let base = &results[0];
    let deltas = results[1..]
        .iter()
        .map(|r| SetDelta {
            label: r.label.clone(),
            against: base.label.clone(),
            test_auc: diff(r.test_auc.as_ref(), base.test_auc.as_ref()),
            test_accuracy: r.test_accuracy.mean - base.test_accuracy.mean,
            final_val_auc: diff(r.final_val_auc.as_ref(), base.final_val_auc.as_ref()),
        })
        .collect();
    let cmp = Comparison {
        epochs,
        sets: results,
        deltas,
    };

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let json = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
    write_file(&out_dir.join("compare.json"), &(json + "\n"))?;

    let mut csv = String::from("epoch");
    for (label, _) in &summaries {
        let _ = write!(csv, ",{label}_loss,{label}_val_auc");
    }
    for (label, _) in &summaries[1..] {
        let _ = write!(csv, ",delta_{label}_loss,delta_{label}_val_auc");
    }
    csv.push('\n');
    for e in 0..epochs {
        let _ = write!(csv, "{}", e + 1);
        for (_, s) in &summaries {
            let c = &s.curves[e];
            let _ = write!(csv, ",{},{}", c.train_loss.mean, cell(c.val_auc.as_ref().map(|x| x.mean)));
        }
        let b = &summaries[0].1.curves[e];
        for (_, s) in &summaries[1..] {
            let c = &s.curves[e];
            let _ = write!(
                csv,
                ",{},{}",
                c.train_loss.mean - b.train_loss.mean,
                cell(diff(c.val_auc.as_ref(), b.val_auc.as_ref()))
            );
        }
        csv.push('\n');
    }
    write_file(&out_dir.join("compare.csv"), &csv)?;

    let mut loss_series = Vec::new();
    let mut auc_series = Vec::new();
    for (label, s) in &summaries {
        let loss = series(s, Series::LossMean);
        let auc = series(s, Series::ValAucMean);
        let stem = file_label(label);
        write_file(&out_dir.join(format!("{stem}_loss.dat")), &dat(loss.iter().copied()))?;
        write_file(&out_dir.join(format!("{stem}_auc.dat")), &dat(auc.iter().copied()))?;
        loss_series.push((label.clone(), points(&loss)));
        auc_series.push((label.clone(), points(&auc)));
    }
    write_file(
        &out_dir.join("compare_loss.svg"),
        &line_chart("Mean training loss", "epoch", "BCE loss", &loss_series),
    )?;
    write_file(
        &out_dir.join("compare_auc.svg"),
        &line_chart("Mean validation AUC", "epoch", "AUC", &auc_series),
    )?;
    Ok(cmp)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Tick positions covering `[lo, hi]` at a 1/2/5 step.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    // k / (1/step) keeps decimal steps like 0.2 exact where possible
    (first..=last)
        .map(|k| if step < 1.0 { k as f64 / (1.0 / step).round() } else { k as f64 * step })
        .collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Static SVG line chart. The last series is drawn thicker; with more than
/// one series a legend is added.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(ylabel)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let width = if i + 1 == series.len() { 2.5 } else { 1.0 };
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
            path.join(" ")
        );
        if series.len() > 1 {
            let ly = top + 10.0 + 18.0 * i as f64;
            let lx = left + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="{width}"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::EpochMetrics;

    fn run(seed: u64, epochs: usize, shift: f64) -> RunMetrics {
        RunMetrics {
            seed,
            split_seed: seed,
            epochs: (1..=epochs)
                .map(|e| EpochMetrics {
                    epoch: e,
                    train_loss: 0.7 / e as f64 + shift,
                    train_auc: Some(0.6 + 0.01 * e as f64),
                    val_auc: Some(0.55 + 0.01 * e as f64 + shift),
                })
                .collect(),
            test_auc: Some(0.8 + shift),
            test_accuracy: 0.75 + shift,
        }
    }

    fn save_all(dir: &Path, runs: &[RunMetrics]) {
        for (k, r) in runs.iter().enumerate() {
            save_run(dir, k, r).unwrap();
        }
    }

    #[test]
    fn five_runs_produce_rows_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let runs: Vec<_> = (0..5).map(|k| run(k, 30, k as f64 * 0.01)).collect();
        save_all(dir.path(), &runs);
        let out = dir.path().join("report");
        let s = write_report(dir.path(), &out).unwrap();
        assert_eq!((s.runs, s.epochs), (5, 30));
        let csv = fs::read_to_string(out.join("curves.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 5 * 30 + 2 * 30);
        for f in ["loss.dat", "auc.dat", "auc_var.dat", "loss.svg", "auc.svg", "auc_variance.svg"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let dat = fs::read_to_string(out.join("auc.dat")).unwrap();
        assert_eq!(dat.lines().count(), 30);
        assert!(dat.lines().all(|l| l.split(' ').count() == 2));
        assert!(s.test_auc.unwrap().var > 0.0);
    }

    #[test]
    fn single_run_has_zero_variance() {
        let dir = tempfile::tempdir().unwrap();
        save_all(dir.path(), &[run(3, 4, 0.0)]);
        let s = write_report(dir.path(), dir.path()).unwrap();
        assert!(s.curves.iter().all(|e| e.train_loss.var == 0.0 && e.val_auc.as_ref().unwrap().var == 0.0));
        let var = fs::read_to_string(dir.path().join("auc_var.dat")).unwrap();
        assert!(var.lines().all(|l| l.ends_with(" 0")));
    }

    #[test]
    fn empty_dir_is_missing_runs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_report(dir.path(), dir.path()), Err(ReportError::MissingRuns(_))));
        assert!(matches!(
            write_report(&dir.path().join("nope"), dir.path()),
            Err(ReportError::MissingRuns(_))
        ));
    }

    #[test]
    fn report_is_byte_stable_and_matches_curves() {
        let dir = tempfile::tempdir().unwrap();
        let runs: Vec<_> = (0..3).map(|k| run(k, 5, k as f64 * 0.03)).collect();
        save_all(dir.path(), &runs);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let s = write_report(dir.path(), &a).unwrap();
        write_report(dir.path(), &b).unwrap();
        for f in ["summary.json", "curves.csv", "auc.svg"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        }
        // recompute the mean rows from the per-run rows of curves.csv
        let csv = fs::read_to_string(a.join("curves.csv")).unwrap();
        for e in 1..=5usize {
            let vals: Vec<f64> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').collect::<Vec<_>>())
                .filter(|c| c[0].parse::<usize>().is_ok() && c[1] == e.to_string())
                .map(|c| c[4].parse().unwrap())
                .collect();
            let (m, v) = crate::train::mean_var(&vals);
            let stat = s.curves[e - 1].val_auc.as_ref().unwrap();
            assert_eq!((m, v), (stat.mean, stat.var));
        }
    }

    #[test]
    fn compare_deltas_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y, z) = (dir.path().join("x"), dir.path().join("y"), dir.path().join("z"));
        for d in [&x, &y, &z] {
            fs::create_dir_all(d).unwrap();
        }
        save_all(&x, &[run(0, 6, 0.0), run(1, 6, 0.01)]);
        save_all(&y, &[run(0, 6, 0.0), run(1, 6, 0.01)]);
        save_all(&z, &[run(0, 4, 0.0)]);
        let out = dir.path().join("cmp");
        let c = compare(&[("a".into(), x.clone()), ("b".into(), y)], &out).unwrap();
        assert_eq!(c.deltas[0].test_auc, Some(0.0));
        assert_eq!(c.deltas[0].test_accuracy, 0.0);
        let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",0,0")));
        assert!(matches!(
            compare(&[("a".into(), x), ("c".into(), z)], &out),
            Err(ReportError::EpochMismatch { expected: 6, found: 4, .. })
        ));
    }

    #[test]
    fn tick_generation() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(ticks(1.0, 30.0), vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(fmt_tick(0.30000000000000004), "0.3");
    }
}
