//! Oracle-inequality ledger: one row per successful replication with every
//! quantity needed to recompute its violation flag.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssumptionConstants, Regime};
use crate::selection::{
    complexity_sum, corollary_residual, oracle_inequality, probability_budget, PenaltySpec, ReplicationFits,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: usize,
    pub name: String,
    pub dim: usize,
    pub constants: AssumptionConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub log_likelihood: f64,
    pub penalty: f64,
    /// `K_n(p^m_{theta_hat})`
    pub loss_at_fit: f64,
    /// Approximation of `inf_theta K_n(p^m_theta)`.
    pub loss_inf: f64,
    pub residual: f64,
    /// `(1 + kappa) loss_inf + 2 penalty + residual`
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub replication: usize,
    pub n: usize,
    pub kappa: f64,
    pub c: f64,
    pub x: f64,
    pub selected: usize,
    /// `K_n(p~)`
    pub loss_selected: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_model: usize,
    pub violated: bool,
    pub models: Vec<ModelEntry>,
}

impl LedgerRow {
    pub fn from_fits(fits: &ReplicationFits, spec: &PenaltySpec, x: f64) -> Result<Self> {
        let check = oracle_inequality(fits, spec, x)?;
        let models = fits
            .models
            .iter()
            .zip(&check.terms)
            .map(|(f, t)| ModelEntry {
                log_likelihood: f.candidate.log_likelihood,
                penalty: t.penalty,
                loss_at_fit: f.loss_at_fit,
                loss_inf: f.loss_inf,
                residual: t.residual,
                bound: t.bound,
            })
            .collect();
        Ok(Self {
            replication: fits.replication,
            n: fits.n,
            kappa: spec.kappa,
            c: spec.c_constant,
            x,
            selected: check.selected,
            loss_selected: check.loss_selected,
            lhs: check.lhs,
            rhs: check.rhs,
            rhs_model: check.rhs_model,
            violated: check.violated,
            models,
        })
    }

    /// Recompute both sides and the flag from the stored columns.
    pub fn consistent(&self) -> bool {
        let k = self.kappa;
        let bounds_ok = self
            .models
            .iter()
            .all(|m| m.bound == (1.0 + k) * m.loss_inf + 2.0 * m.penalty + m.residual);
        let rhs = self.models.iter().map(|m| m.bound).fold(f64::INFINITY, f64::min);
        let lhs = (1.0 - k) * self.loss_selected;
        let sel = self.models.get(self.selected);
        bounds_ok
            && rhs == self.rhs
            && lhs == self.lhs
            && self.models.get(self.rhs_model).map(|m| m.bound) == Some(rhs)
            && sel.map(|m| m.loss_at_fit) == Some(self.loss_selected)
            && self.violated == (lhs > rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplication {
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleLedger {
    pub family: String,
    pub regime: Regime,
    pub n: usize,
    pub kappa: f64,
    pub c: f64,
    pub x: f64,
    pub models: Vec<ModelInfo>,
    pub rows: Vec<LedgerRow>,
    pub failures: Vec<FailedReplication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryCheck {
    /// `(1 - kappa) E K_n(p~)`
    pub lhs: f64,
    /// `min_m [(1 + kappa) E inf K_n(p^m) + 2 pen(m)] + residual`
    pub rhs: f64,
    pub residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub family: String,
    pub regime: Regime,
    pub n: usize,
    pub kappa: f64,
    pub c: f64,
    pub x: f64,
    pub replications: usize,
    pub failed: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub complexity_sum: f64,
    pub complexity_tail_warning: bool,
    pub probability_budget: f64,
    pub mean_risk: f64,
    pub mean_oracle_risk: f64,
    pub corollary: Option<CorollaryCheck>,
    pub selection_frequency: BTreeMap<String, f64>,
    pub inconsistent_rows: usize,
}

impl OracleLedger {
    pub fn new(
        family: &str,
        regime: Regime,
        spec: &PenaltySpec,
        x: f64,
        models: &[(String, usize, AssumptionConstants)],
    ) -> Self {
        Self {
            family: family.to_string(),
            regime,
            n: spec.n,
            kappa: spec.kappa,
            c: spec.c_constant,
            x,
            models: models
                .iter()
                .enumerate()
                .map(|(id, (name, dim, c))| ModelInfo {
                    id,
                    name: name.clone(),
                    dim: *dim,
                    constants: c.clone(),
                })
                .collect(),
            rows: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn summary(&self) -> LedgerSummary {
        let m = self.rows.len();
        let mf = m as f64;
        let violations = self.rows.iter().filter(|r| r.violated).count();
        let sigma = complexity_sum(self.models.iter().map(|i| (i.constants.scale(), i.dim)));
        let mut counts = vec![0usize; self.models.len()];
        for r in &self.rows {
            if let Some(c) = counts.get_mut(r.selected) {
                *c += 1;
            }
        }
        let freq: BTreeMap<String, f64> = self
            .models
            .iter()
            .zip(&counts)
            .map(|(i, &c)| (i.name.clone(), if m == 0 { 0.0 } else { c as f64 / mf }))
            .collect();
        let mean = |f: &dyn Fn(&LedgerRow) -> f64| {
            if m == 0 {
                0.0
            } else {
                self.rows.iter().map(f).sum::<f64>() / mf
            }
        };
        let mean_risk = mean(&|r| r.loss_selected);
        let mean_oracle_risk = mean(&|r| r.models.iter().map(|e| e.loss_inf).fold(f64::INFINITY, f64::min));
        LedgerSummary {
            family: self.family.clone(),
            regime: self.regime,
            n: self.n,
            kappa: self.kappa,
            c: self.c,
            x: self.x,
            replications: m,
            failed: self.failures.len(),
            violations,
            violation_rate: if m == 0 { 0.0 } else { violations as f64 / mf },
            complexity_sum: sigma.value,
            complexity_tail_warning: sigma.tail_warning,
            probability_budget: probability_budget(self.regime, self.n, sigma.value, self.x),
            mean_risk,
            mean_oracle_risk,
            corollary: (m > 0).then(|| self.corollary(mean_risk, sigma.value)),
            selection_frequency: freq,
            inconsistent_rows: self.rows.iter().filter(|r| !r.consistent()).count(),
        }
    }

    fn corollary(&self, mean_risk: f64, sigma: f64) -> CorollaryCheck {
        let mf = self.rows.len() as f64;
        let k = self.kappa;
        let rhs_core = (0..self.models.len())
            .map(|j| {
                let (inf, pen) = self.rows.iter().fold((0.0, 0.0), |acc, r| {
                    (acc.0 + r.models[j].loss_inf, acc.1 + r.models[j].penalty)
                });
                (1.0 + k) * inf / mf + 2.0 * pen / mf
            })
            .fold(f64::INFINITY, f64::min);
        let constants: Vec<AssumptionConstants> = self.models.iter().map(|i| i.constants.clone()).collect();
        let residual = PenaltySpec::new(self.regime, k, self.c, self.n)
            .map(|spec| corollary_residual(&constants, sigma, &spec))
            .unwrap_or(f64::NAN);
        let lhs = (1.0 - k) * mean_risk;
        let rhs = rhs_core + residual;
        CorollaryCheck {
            lhs,
            rhs,
            residual,
            holds: lhs <= rhs,
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::InvalidTrajectory(format!("bad float {s:?} in ledger")))
}

fn parse_u(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::InvalidTrajectory(format!("bad integer {s:?} in ledger")))
}

const FIXED: [&str; 11] = [
    "replication",
    "n",
    "kappa",
    "c",
    "x",
    "selected",
    "loss_selected",
    "lhs",
    "rhs",
    "rhs_model",
    "violated",
];
const PER_MODEL: [&str; 6] = ["loglik", "pen", "kfit", "infk", "resid", "bound"];

pub fn ledger_header(models: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    for m in 0..models {
        h.extend(PER_MODEL.iter().map(|p| format!("{p}_{m}")));
    }
    h
}

pub fn write_ledger_csv<W: Write>(w: W, models: usize, rows: &[LedgerRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ledger_header(models))?;
    for r in rows {
        let mut rec = vec![
            r.replication.to_string(),
            r.n.to_string(),
            fmt(r.kappa),
            fmt(r.c),
            fmt(r.x),
            r.selected.to_string(),
            fmt(r.loss_selected),
            fmt(r.lhs),
            fmt(r.rhs),
            r.rhs_model.to_string(),
            r.violated.to_string(),
        ];
        for e in &r.models {
            rec.extend([e.log_likelihood, e.penalty, e.loss_at_fit, e.loss_inf, e.residual, e.bound].map(fmt));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of a ledger CSV written by [`write_ledger_csv`], bit for bit.
pub fn read_ledger_csv<R: Read>(r: R) -> Result<(usize, Vec<LedgerRow>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let extra = header.len().checked_sub(FIXED.len()).unwrap_or(usize::MAX);
    if extra == usize::MAX || extra % PER_MODEL.len() != 0 {
        return Err(Error::InvalidTrajectory(format!("ledger header has {} columns", header.len())));
    }
    let models = extra / PER_MODEL.len();
    if header.iter().ne(ledger_header(models).iter().map(String::as_str)) {
        return Err(Error::InvalidTrajectory("unexpected ledger header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| parse_f(&rec[i]);
        let violated = match &rec[10] {
            "true" => true,
            "false" => false,
            other => return Err(Error::InvalidTrajectory(format!("bad flag {other:?}"))),
        };
        let mut entries = Vec::with_capacity(models);
        for m in 0..models {
            let b = FIXED.len() + m * PER_MODEL.len();
            entries.push(ModelEntry {
                log_likelihood: f(b)?,
                penalty: f(b + 1)?,
                loss_at_fit: f(b + 2)?,
                loss_inf: f(b + 3)?,
                residual: f(b + 4)?,
                bound: f(b + 5)?,
            });
        }
        rows.push(LedgerRow {
            replication: parse_u(&rec[0])?,
            n: parse_u(&rec[1])?,
            kappa: f(2)?,
            c: f(3)?,
            x: f(4)?,
            selected: parse_u(&rec[5])?,
            loss_selected: f(6)?,
            lhs: f(7)?,
            rhs: f(8)?,
            rhs_model: parse_u(&rec[9])?,
            violated,
            models: entries,
        });
    }
    Ok((models, rows))
}
