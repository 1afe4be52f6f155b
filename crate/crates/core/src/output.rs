//! File writers for draws, summaries, coverage tables and plot data.
//!
//! Every CSV is written with a fixed row order and floats with 17
//! significant digits, so identical runs give identical bytes.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::CellKey;
use crate::error::{Error, Result};
use crate::mcmc::{ChainDraws, UnivariateData, UnivariatePriors};
use crate::pipeline::{interval_overlap, CellResult, CoverageReport, PipelineRun, StepResult};
use crate::prior::ElicitedMoments;
use crate::summary::PosteriorSummary;

/// Float formatting used in every CSV: 17 significant digits, so values
/// round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Draws CSV plus its JSON metadata sidecar (`<stem>.csv`, `<stem>.json`).
pub fn write_draws(dir: &Path, stem: &str, draws: &ChainDraws) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    draws.write_csv(create(&csv_path)?)?;
    write_json(&dir.join(format!("{stem}.json")), &draws.metadata())
}

pub const SUMMARY_HEADER: [&str; 7] = ["cell", "parameter", "mean", "sd", "median", "hpd_lo", "hpd_hi"];

fn summary_record(cell: &str, param: &str, s: &PosteriorSummary) -> Vec<String> {
    vec![
        cell.to_string(),
        param.to_string(),
        fmt_f64(s.mean),
        fmt_f64(s.sd),
        fmt_f64(s.median),
        fmt_f64(s.hpd_lo),
        fmt_f64(s.hpd_hi),
    ]
}

/// Summary rows for every parameter of every draws column, in column order.
pub fn write_summary_csv<'a, I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (String, &'a str, &'a PosteriorSummary)>,
{
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (cell, param, s) in rows {
        w.write_record(summary_record(&cell, param, s))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cell_label(step: &StepResult, c: &CellResult) -> String {
    if step.step == "step1" || step.step == "step2" {
        c.label()
    } else {
        format!("{}_{}", c.label(), c.year)
    }
}

fn ordered_summaries(c: &CellResult) -> Vec<(&str, &PosteriorSummary)> {
    c.draws
        .names
        .iter()
        .filter_map(|n| c.summaries.get(n).map(|s| (n.as_str(), s)))
        .collect()
}

/// Writes draws, `summary.csv`, `skipped.csv` and, for per-wave steps,
/// `rates_<year>.csv` into `dir`.
pub fn write_step(dir: &Path, step: &StepResult, with_rates: bool) -> Result<()> {
    for c in &step.cells {
        write_draws(dir, &format!("draws_{}", cell_label(step, c)), &c.draws)?;
    }
    write_summary_csv(
        &dir.join("summary.csv"),
        step.cells.iter().flat_map(|c| {
            let label = cell_label(step, c);
            ordered_summaries(c)
                .into_iter()
                .map(move |(p, s)| (label.clone(), p, s))
        }),
    )?;
    let skipped = dir.join("skipped.csv");
    let mut w = csv_writer(&skipped)?;
    w.write_record(["cell", "year", "reason"])?;
    for s in &step.skipped {
        w.write_record([s.cell.as_str(), &s.year.to_string(), s.reason.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(&skipped, e))?;
    if with_rates {
        write_rates(&dir.join(format!("rates_{}.csv", step.year)), step)?;
    }
    Ok(())
}

pub fn write_rates(path: &Path, step: &StepResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["cell", "raw_rate", "post_mean", "hpd_lo", "hpd_hi"])?;
    for c in &step.cells {
        let s = &c.summaries["rate"];
        w.write_record([
            c.label(),
            fmt_f64(c.raw_rate),
            fmt_f64(s.mean),
            fmt_f64(s.hpd_lo),
            fmt_f64(s.hpd_hi),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `coverage.csv` (method, parameter, hits, replicates, frequency) and
/// `replicates.csv` with one row per replicate, method and parameter.
pub fn write_coverage(dir: &Path, report: &CoverageReport) -> Result<()> {
    let path = dir.join("coverage.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "parameter", "hits", "replicates", "frequency"])?;
    for m in &report.methods {
        for (p, c) in m.parameters.iter().zip(&m.counts) {
            w.write_record([
                m.method.clone(),
                p.clone(),
                c.hits.to_string(),
                c.replicates.to_string(),
                fmt_f64(c.frequency()),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("replicates.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "replicate", "method", "parameter", "truth", "mean", "sd", "hpd_lo", "hpd_hi", "covered",
    ])?;
    let groups = report.config.groups;
    for r in &report.replicates {
        let mut truths: Vec<f64> = r.sample.sizes.iter().map(|&m| m as f64).collect();
        truths.push(r.sample.sizes.iter().sum::<u64>() as f64);
        for (name, m) in [("mcmc", &r.mcmc), ("abc", &r.abc)] {
            let Some(m) = m else { continue };
            for (p, truth) in truths.iter().enumerate() {
                let param = if p < groups { format!("M{}", p + 1) } else { "N".into() };
                let mut rec = vec![r.replicate.to_string(), name.into(), param, fmt_f64(*truth)];
                match m.summaries.get(p) {
                    Some(s) => rec.extend([
                        fmt_f64(s.mean),
                        fmt_f64(s.sd),
                        fmt_f64(s.hpd_lo),
                        fmt_f64(s.hpd_hi),
                        u8::from(s.contains(*truth)).to_string(),
                    ]),
                    None => rec.extend(["", "", "", "", "0"].map(String::from)),
                }
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Draw-free view of a cell result, enough to rebuild every plot table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: CellKey,
    pub year: i32,
    pub data: UnivariateData,
    pub priors: UnivariatePriors,
    pub summaries: std::collections::BTreeMap<String, PosteriorSummary>,
    pub moments: std::collections::BTreeMap<String, ElicitedMoments>,
    pub raw_rate: f64,
    pub prob_w_above_one: f64,
    pub acceptance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: String,
    pub year: i32,
    pub cells: Vec<CellSummary>,
    pub skipped: Vec<crate::pipeline::SkippedCell>,
}

impl From<&StepResult> for StepSummary {
    fn from(s: &StepResult) -> Self {
        Self {
            step: s.step.clone(),
            year: s.year,
            cells: s
                .cells
                .iter()
                .map(|c| CellSummary {
                    key: c.key.clone(),
                    year: c.year,
                    data: c.data,
                    priors: c.priors.clone(),
                    summaries: c.summaries.clone(),
                    moments: c.moments.clone(),
                    raw_rate: c.raw_rate,
                    prob_w_above_one: c.prob_w_above_one(),
                    acceptance: c.draws.acceptance.iter().take(3).copied().collect(),
                })
                .collect(),
            skipped: s.skipped.clone(),
        }
    }
}

/// Summaries of whichever pipeline stages were run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step1: Option<StepSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step2: Option<StepSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step3: Vec<StepSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivity: Vec<SensitivitySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub alpha: f64,
    pub waves: Vec<StepSummary>,
}

impl From<&PipelineRun> for RunSummary {
    fn from(r: &PipelineRun) -> Self {
        Self {
            step1: Some((&r.step1).into()),
            step2: Some((&r.step2).into()),
            step3: r.step3.iter().map(Into::into).collect(),
            sensitivity: r
                .sensitivity
                .iter()
                .map(|(a, w)| SensitivitySummary {
                    alpha: *a,
                    waves: w.iter().map(Into::into).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    SizePosteriors,
    OddsPosteriors,
    RateTimeseries,
    SensitivityOverlay,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::SizePosteriors,
        PlotKind::OddsPosteriors,
        PlotKind::RateTimeseries,
        PlotKind::SensitivityOverlay,
    ];

    pub fn file_name(&self) -> String {
        format!("{self}.csv")
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::SizePosteriors => "size-posteriors",
            PlotKind::OddsPosteriors => "odds-posteriors",
            PlotKind::RateTimeseries => "rate-timeseries",
            PlotKind::SensitivityOverlay => "sensitivity-overlay",
        })
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown plot kind '{s}' (expected one of size-posteriors, odds-posteriors, rate-timeseries, sensitivity-overlay)"
                ))
            })
    }
}

/// One tidy plot-data row.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub program: String,
    pub gender: String,
    pub year: i32,
    pub series: String,
    pub value: f64,
}

fn rows_for(cell: &CellSummary, series: &[(&str, f64)]) -> Vec<PlotRow> {
    series
        .iter()
        .map(|(s, v)| PlotRow {
            program: cell.key.program.clone(),
            gender: cell.key.gender.to_string(),
            year: cell.year,
            series: s.to_string(),
            value: *v,
        })
        .collect()
}

/// Tidy rows for one plot kind. Missing stages give no rows.
pub fn plot_rows(run: &RunSummary, kind: PlotKind) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    match kind {
        PlotKind::SizePosteriors => {
            for c in run.step1.iter().flat_map(|s| &s.cells) {
                let (m, n) = (&c.summaries["M"], &c.summaries["N"]);
                // Group sizes scaled by the cell's own posterior mean of N.
                rows.extend(rows_for(
                    c,
                    &[
                        ("m_mean", m.mean),
                        ("m_hpd_lo", m.hpd_lo),
                        ("m_hpd_hi", m.hpd_hi),
                        ("n_mean", n.mean),
                        ("n_hpd_lo", n.hpd_lo),
                        ("n_hpd_hi", n.hpd_hi),
                        ("m_scaled_mean", m.mean / n.mean),
                        ("m_scaled_hpd_lo", m.hpd_lo / n.mean),
                        ("m_scaled_hpd_hi", m.hpd_hi / n.mean),
                    ],
                ));
            }
        }
        PlotKind::OddsPosteriors => {
            for c in run.step2.iter().flat_map(|s| &s.cells) {
                let w = &c.summaries["w"];
                rows.extend(rows_for(
                    c,
                    &[
                        ("w_mean", w.mean),
                        ("w_sd", w.sd),
                        ("w_median", w.median),
                        ("w_hpd_lo", w.hpd_lo),
                        ("w_hpd_hi", w.hpd_hi),
                        ("p_w_above_one", c.prob_w_above_one),
                    ],
                ));
            }
        }
        PlotKind::RateTimeseries => {
            for c in run.step3.iter().flat_map(|s| &s.cells) {
                let r = &c.summaries["rate"];
                rows.extend(rows_for(
                    c,
                    &[
                        ("raw", c.raw_rate),
                        ("post_mean", r.mean),
                        ("hpd_lo", r.hpd_lo),
                        ("hpd_hi", r.hpd_hi),
                    ],
                ));
            }
        }
        PlotKind::SensitivityOverlay => {
            for sens in &run.sensitivity {
                for wave in &sens.waves {
                    let base = run.step3.iter().find(|s| s.year == wave.year);
                    for c in &wave.cells {
                        let r = &c.summaries["rate"];
                        let tag = format!("alpha_{}", sens.alpha);
                        let mut series = vec![
                            (format!("{tag}_post_mean"), r.mean),
                            (format!("{tag}_hpd_lo"), r.hpd_lo),
                            (format!("{tag}_hpd_hi"), r.hpd_hi),
                        ];
                        if let Some(b) = base
                            .and_then(|b| b.cells.iter().find(|bc| bc.key == c.key))
                            .map(|bc| &bc.summaries["rate"])
                        {
                            series.push((
                                format!("{tag}_overlap"),
                                interval_overlap((b.hpd_lo, b.hpd_hi), (r.hpd_lo, r.hpd_hi)),
                            ));
                        }
                        let series: Vec<(&str, f64)> =
                            series.iter().map(|(s, v)| (s.as_str(), *v)).collect();
                        rows.extend(rows_for(c, &series));
                    }
                }
            }
        }
    }
    rows
}

/// Writes the plot table for `kind` to `path` (header only when empty).
pub fn emit_plot_data(run: &RunSummary, kind: PlotKind, path: &Path) -> Result<usize> {
    let rows = plot_rows(run, kind);
    let mut w = csv_writer(path)?;
    w.write_record(["program", "gender", "year", "series", "value"])?;
    for r in &rows {
        w.write_record([
            r.program.clone(),
            r.gender.clone(),
            r.year.to_string(),
            r.series.clone(),
            fmt_f64(r.value),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows.len())
}

/// Writes every plot table into `dir`.
pub fn emit_all_plots(run: &RunSummary, dir: &Path) -> Result<()> {
    for kind in PlotKind::ALL {
        emit_plot_data(run, kind, &dir.join(kind.file_name()))?;
    }
    Ok(())
}

/// Writes a full pipeline run: one directory per stage, `results.json`
/// with draw-free summaries, and all plot tables under `plots/`.
pub fn write_pipeline_run(dir: &Path, run: &PipelineRun) -> Result<RunSummary> {
    write_step(&dir.join("step1"), &run.step1, false)?;
    write_step(&dir.join("step2"), &run.step2, false)?;
    for s in &run.step3 {
        write_step(&dir.join("step3"), s, true)?;
    }
    for (alpha, waves) in &run.sensitivity {
        for s in waves {
            write_step(&dir.join(format!("sensitivity_{alpha}")), s, true)?;
        }
    }
    let summary = RunSummary::from(run);
    write_json(&dir.join("results.json"), &summary)?;
    emit_all_plots(&summary, &dir.join("plots"))?;
    Ok(summary)
}
