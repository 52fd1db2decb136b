use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ledger::{read_ledger_csv, write_ledger_csv, FailedReplication, LedgerSummary, ModelInfo};
use super::run::{CalibrationOutcome, ExperimentOutput, RiskPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub constant: f64,
    pub risk_optimal: f64,
    pub chosen: f64,
    pub target: f64,
    pub replications: usize,
    pub failed: usize,
}

impl From<&CalibrationOutcome> for CalibrationSummary {
    fn from(c: &CalibrationOutcome) -> Self {
        Self {
            constant: c.report.constant,
            risk_optimal: c.report.risk_optimal(),
            chosen: c.chosen,
            target: c.report.target,
            replications: c.replications,
            failed: c.failures.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub summary: LedgerSummary,
    pub calibration: Option<CalibrationSummary>,
    pub models: Vec<ModelInfo>,
    pub failures: Vec<FailedReplication>,
}

impl ExperimentSummary {
    pub fn new(out: &ExperimentOutput) -> Self {
        Self {
            summary: out.ledger.summary(),
            calibration: out.calibration.as_ref().map(CalibrationSummary::from),
            models: out.ledger.models.clone(),
            failures: out.ledger.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub ledger: PathBuf,
    pub summary: PathBuf,
    pub risk: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path, prefix: &str) -> Self {
        Self {
            ledger: dir.join(format!("{prefix}ledger.csv")),
            summary: dir.join(format!("{prefix}summary.json")),
            risk: dir.join(format!("{prefix}risk.csv")),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::IoFailure(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::IoFailure(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize, W: Write>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_risk_csv<W: Write>(w: W, models: usize, points: &[RiskPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["n", "replications", "failed", "mean_risk", "se_risk", "mean_oracle_risk"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..models).map(|m| format!("freq_{m}")));
    out.write_record(&header)?;
    for p in points {
        let mut rec = vec![
            p.n.to_string(),
            p.replications.to_string(),
            p.failed.to_string(),
            format!("{:?}", p.mean_risk),
            format!("{:?}", p.se_risk),
            format!("{:?}", p.mean_oracle_risk),
        ];
        rec.extend(p.selection_frequency.iter().map(|f| format!("{f:?}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Ledger CSV, JSON summary and risk-versus-n CSV.
pub fn emit_reports(out: &ExperimentOutput, paths: &ReportPaths) -> Result<()> {
    let models = out.ledger.models.len();
    write_ledger_csv(create(&paths.ledger)?, models, &out.ledger.rows)?;
    write_json(create(&paths.summary)?, &ExperimentSummary::new(out))?;
    write_risk_csv(create(&paths.risk)?, models, &out.risk)?;
    Ok(())
}

pub fn emit_calibration(cal: &CalibrationOutcome, path: &Path) -> Result<()> {
    write_json(create(path)?, cal)
}

/// Summary of a ledger CSV on its own: row consistency, violation rate and
/// selection frequencies by model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub replications: usize,
    pub models: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub inconsistent_rows: Vec<usize>,
    pub mean_risk: f64,
    pub selection_frequency: Vec<f64>,
}

pub fn check_ledger<R: Read>(r: R) -> Result<LedgerCheck> {
    let (models, rows) = read_ledger_csv(r)?;
    let m = rows.len();
    let violations = rows.iter().filter(|r| r.violated).count();
    let mut freq = vec![0.0; models];
    for r in &rows {
        if let Some(f) = freq.get_mut(r.selected) {
            *f += 1.0;
        }
    }
    let mf = m.max(1) as f64;
    freq.iter_mut().for_each(|f| *f /= mf);
    Ok(LedgerCheck {
        replications: m,
        models,
        violations,
        violation_rate: violations as f64 / mf,
        inconsistent_rows: rows.iter().filter(|r| !r.consistent()).map(|r| r.replication).collect(),
        mean_risk: rows.iter().map(|r| r.loss_selected).sum::<f64>() / mf,
        selection_frequency: freq,
    })
}
