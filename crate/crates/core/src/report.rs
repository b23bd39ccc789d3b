//! Tabular simulation results, aggregates, and their on-disk form.
//!
//! Rows go to a CSV with a fixed header; aggregates and test results go to a
//! JSON sidecar next to it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SelectionMode;
use crate::inference::DecisionModel;
use crate::stats::{mean, variance, welch_t_test};

pub const CSV_HEADER: &str =
    "profile_accuracy,model,criterion,run,session_time_s,wrong_selections,chars_typed,draws";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub profile_accuracy: f64,
    pub model: DecisionModel,
    pub criterion: SelectionMode,
    pub run: usize,
    pub session_time_s: f64,
    pub wrong_selections: u32,
    pub chars_typed: u32,
    pub draws: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub profile_accuracy: f64,
    pub model: DecisionModel,
    pub criterion: SelectionMode,
    pub runs: usize,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub mean_wrong_selections: f64,
    pub mean_draws: f64,
}

/// Welch test of one decoder against the baseline within a (profile,
/// criterion) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub profile_accuracy: f64,
    pub criterion: SelectionMode,
    pub model: DecisionModel,
    pub model_mean_s: f64,
    pub baseline_mean_s: f64,
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Serialize)]
struct Summary<'a> {
    alpha: f64,
    rows: usize,
    cells: &'a [CellSummary],
    comparisons: &'a [Comparison],
}

impl SimulationReport {
    /// Aggregates rows by (profile, model, criterion), in order of first
    /// appearance, and tests each decoder against the baseline.
    pub fn from_rows(rows: Vec<ReportRow>, alpha: f64) -> Self {
        let mut keys: Vec<(f64, DecisionModel, SelectionMode)> = Vec::new();
        for r in &rows {
            let key = (r.profile_accuracy, r.model, r.criterion);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let times = |acc: f64, model: DecisionModel, crit: SelectionMode| -> Vec<f64> {
            rows.iter()
                .filter(|r| r.profile_accuracy == acc && r.model == model && r.criterion == crit)
                .map(|r| r.session_time_s)
                .collect()
        };
        let cells = keys
            .iter()
            .map(|&(acc, model, criterion)| {
                let sel: Vec<&ReportRow> = rows
                    .iter()
                    .filter(|r| r.profile_accuracy == acc && r.model == model && r.criterion == criterion)
                    .collect();
                let t: Vec<f64> = sel.iter().map(|r| r.session_time_s).collect();
                CellSummary {
                    profile_accuracy: acc,
                    model,
                    criterion,
                    runs: sel.len(),
                    mean_time_s: mean(&t),
                    std_time_s: variance(&t).sqrt(),
                    mean_wrong_selections: sel.iter().map(|r| r.wrong_selections as f64).sum::<f64>()
                        / sel.len() as f64,
                    mean_draws: sel.iter().map(|r| r.draws as f64).sum::<f64>() / sel.len() as f64,
                }
            })
            .collect();
        let mut comparisons = Vec::new();
        for &(acc, model, criterion) in &keys {
            if model == DecisionModel::Baseline {
                continue;
            }
            let base = times(acc, DecisionModel::Baseline, criterion);
            let ours = times(acc, model, criterion);
            if let Ok(w) = welch_t_test(&ours, &base) {
                comparisons.push(Comparison {
                    profile_accuracy: acc,
                    criterion,
                    model,
                    model_mean_s: mean(&ours),
                    baseline_mean_s: mean(&base),
                    t: w.t,
                    p: w.p,
                    df: w.df,
                    significant: w.p < alpha,
                });
            }
        }
        Self {
            alpha,
            rows,
            cells,
            comparisons,
        }
    }

    pub fn cell(&self, accuracy: f64, model: DecisionModel, criterion: SelectionMode) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.profile_accuracy == accuracy && c.model == model && c.criterion == criterion)
    }

    pub fn comparison(
        &self,
        accuracy: f64,
        model: DecisionModel,
        criterion: SelectionMode,
    ) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.profile_accuracy == accuracy && c.model == model && c.criterion == criterion)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Summary {
            alpha: self.alpha,
            rows: self.rows.len(),
            cells: &self.cells,
            comparisons: &self.comparisons,
        })?)
    }
}

/// Writes `<path>` as CSV and `<path>.summary.json` beside it. Returns the
/// sidecar path.
pub fn write_report(report: &SimulationReport, path: &Path) -> Result<PathBuf> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let sidecar = summary_path(path);
    std::fs::write(&sidecar, report.summary_json()? + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

pub fn summary_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    csv_path.with_file_name(name)
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            what: "report CSV",
            line: 1,
            msg: format!("unexpected header {:?}", header.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_report_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(file)
}
