//! Config-driven Monte Carlo experiments: replicate, fit, select, record the
//! oracle-inequality ledger and write reports.

pub mod config;
pub mod ledger;
pub mod lemmas;
pub mod report;
pub mod run;
pub mod scenario;

pub use config::{CalibratedChoice, ExperimentConfig, FamilyConfig, PenaltyConfig};
pub use ledger::{LedgerRow, LedgerSummary, OracleLedger};
pub use report::{check_ledger, emit_calibration, emit_reports, ExperimentSummary, ReportPaths};
pub use run::{calibrate, run_experiment, CalibrationOutcome, ExperimentOutput, RiskPoint};
