use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{calibrate_from_fits, CalibrationReport, PenaltySpec, ReplicationFits};

use super::config::{CalibratedChoice, ExperimentConfig, PenaltyConfig};
use super::ledger::{FailedReplication, LedgerRow, OracleLedger};
use super::scenario::{build, Scenario};

/// Calibration replications use indices from here on, so they never share a
/// substream with the held-out replications.
pub const CALIBRATION_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub report: CalibrationReport,
    pub choice: CalibratedChoice,
    /// Constant used for selection on the held-out replications.
    pub chosen: f64,
    pub replications: usize,
    pub failures: Vec<FailedReplication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub n: usize,
    pub replications: usize,
    pub failed: usize,
    pub mean_risk: f64,
    pub se_risk: f64,
    pub mean_oracle_risk: f64,
    pub selection_frequency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub ledger: OracleLedger,
    pub calibration: Option<CalibrationOutcome>,
    pub risk: Vec<RiskPoint>,
}

/// Run replications `ids` in parallel; results come back in id order with
/// failures split out.
pub fn replicate_all(
    scenario: &dyn Scenario,
    seed: u64,
    ids: impl IntoParallelIterator<Item = u64>,
) -> (Vec<ReplicationFits>, Vec<FailedReplication>) {
    let results: Vec<(u64, Result<ReplicationFits>)> =
        ids.into_par_iter().map(|r| (r, scenario.replicate(seed, r))).collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(f) => fits.push(f),
            Err(e) => failures.push(FailedReplication {
                replication: r as usize,
                error: e.to_string(),
            }),
        }
    }
    (fits, failures)
}

fn ledger_from(
    cfg: &ExperimentConfig,
    scenario: &dyn Scenario,
    c: f64,
    fits: &[ReplicationFits],
    failures: Vec<FailedReplication>,
) -> Result<OracleLedger> {
    let spec = PenaltySpec::new(scenario.regime(), cfg.kappa, c, scenario.n())?;
    let mut ledger = OracleLedger::new(cfg.family.kind(), scenario.regime(), &spec, cfg.x, &scenario.models());
    ledger.rows = fits
        .iter()
        .map(|f| LedgerRow::from_fits(f, &spec, cfg.x))
        .collect::<Result<_>>()?;
    ledger.failures = failures;
    Ok(ledger)
}

/// Calibrate the penalty constant on replications independent of the
/// held-out ones. With a fixed-constant config, `cfg.replications`
/// replications and the default grid are used.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrationOutcome> {
    let (reps, coverage, choice) = match &cfg.penalty {
        PenaltyConfig::Calibrate {
            replications,
            coverage,
            choice,
            ..
        } => (*replications, *coverage, *choice),
        PenaltyConfig::Fixed { .. } => (cfg.replications, crate::selection::DEFAULT_COVERAGE, CalibratedChoice::Coverage),
    };
    if reps == 0 {
        return Err(Error::CalibrationFailed("no calibration replications".into()));
    }
    let scenario = build(&cfg.family, cfg.n, cfg.regime)?;
    let ids = CALIBRATION_OFFSET..CALIBRATION_OFFSET + reps as u64;
    let (fits, failures) = replicate_all(scenario.as_ref(), cfg.seed, ids);
    let report = calibrate_from_fits(&fits, scenario.regime(), cfg.kappa, cfg.x, &cfg.grid(), coverage)?;
    let chosen = match choice {
        CalibratedChoice::Coverage => report.constant,
        CalibratedChoice::RiskOptimal => report.risk_optimal(),
    };
    Ok(CalibrationOutcome {
        report,
        choice,
        chosen,
        replications: fits.len(),
        failures,
    })
}

fn risk_point(ledger: &OracleLedger) -> RiskPoint {
    let s = ledger.summary();
    let m = ledger.rows.len();
    let se = if m > 1 {
        let var = ledger.rows.iter().map(|r| (r.loss_selected - s.mean_risk).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    let mut freq = vec![0.0; ledger.models.len()];
    for r in &ledger.rows {
        freq[r.selected] += 1.0;
    }
    if m > 0 {
        freq.iter_mut().for_each(|f| *f /= m as f64);
    }
    RiskPoint {
        n: ledger.n,
        replications: m,
        failed: ledger.failures.len(),
        mean_risk: s.mean_risk,
        se_risk: se,
        mean_oracle_risk: s.mean_oracle_risk,
        selection_frequency: freq,
    }
}

/// Calibrate if asked, then simulate, fit, select and score
/// `cfg.replications` held-out replications at every horizon.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let calibration = match cfg.penalty {
        PenaltyConfig::Calibrate { .. } => Some(calibrate(cfg)?),
        PenaltyConfig::Fixed { .. } => None,
    };
    let c = match (&cfg.penalty, &calibration) {
        (PenaltyConfig::Fixed { constant }, _) => *constant,
        (_, Some(cal)) => cal.chosen,
        _ => unreachable!("calibration present in calibrate mode"),
    };
    let mut main = None;
    let mut risk = Vec::new();
    for n in cfg.horizons() {
        let scenario = build(&cfg.family, n, cfg.regime)?;
        let (fits, failures) = replicate_all(scenario.as_ref(), cfg.seed, 0..cfg.replications as u64);
        let ledger = ledger_from(cfg, scenario.as_ref(), c, &fits, failures)?;
        risk.push(risk_point(&ledger));
        if n == cfg.n {
            main = Some(ledger);
        }
    }
    Ok(ExperimentOutput {
        ledger: main.expect("the main horizon is always run"),
        calibration,
        risk,
    })
}
