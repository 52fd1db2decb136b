//! Penalties, the penalized criterion and its argmin, the complexity sum,
//! the `sigma_m` fixed point, and Monte Carlo calibration of the numerical
//! penalty constant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssumptionConstants, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub regime: Regime,
    pub kappa: f64,
    pub c_constant: f64,
    pub n: usize,
}

impl PenaltySpec {
    pub fn new(regime: Regime, kappa: f64, c_constant: f64, n: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::InvalidPenaltySpec(format!("kappa = {kappa} not in (0, 1]")));
        }
        if !(c_constant > 0.0) || !c_constant.is_finite() {
            return Err(Error::InvalidPenaltySpec(format!("C = {c_constant} must be > 0")));
        }
        if n < 2 {
            return Err(Error::InvalidPenaltySpec(format!("n = {n} < 2")));
        }
        Ok(Self {
            regime,
            kappa,
            c_constant,
            n,
        })
    }

    fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }
}

/// `(C / kappa) A^2 log(1/eps)^{3/2} log(n A)^2 D / n` with `A = L M + 2 log(1/eps)`.
pub fn penalty_bounded(constants: &AssumptionConstants, dim: usize, spec: &PenaltySpec) -> Result<f64> {
    if constants.regime != Regime::Bounded || spec.regime != Regime::Bounded {
        return Err(Error::RegimeMismatch {
            expected: Regime::Bounded,
        });
    }
    let a = constants.scale();
    let li = constants.log_inv_epsilon().unwrap_or(0.0);
    let n = spec.n as f64;
    Ok(spec.c_constant / spec.kappa * a * a * li.powf(1.5) * (n * a).ln().powi(2) * dim as f64 / n)
}

/// `(C / kappa) A^2 B^{3/2} log(n)^{7/2} log(n A)^2 D / n` with `A = L M + B`.
pub fn penalty_unbounded(constants: &AssumptionConstants, dim: usize, spec: &PenaltySpec) -> Result<f64> {
    if constants.regime != Regime::Unbounded || spec.regime != Regime::Unbounded {
        return Err(Error::RegimeMismatch {
            expected: Regime::Unbounded,
        });
    }
    let a = constants.scale();
    let b = constants.tail_scale.unwrap_or(1.0);
    let n = spec.n as f64;
    Ok(spec.c_constant / spec.kappa
        * a
        * a
        * b.powf(1.5)
        * spec.ln_n().powf(3.5)
        * (n * a).ln().powi(2)
        * dim as f64
        / n)
}

pub fn penalty(constants: &AssumptionConstants, dim: usize, spec: &PenaltySpec) -> Result<f64> {
    match spec.regime {
        Regime::Bounded => penalty_bounded(constants, dim, spec),
        Regime::Unbounded => penalty_unbounded(constants, dim, spec),
    }
}

/// Per-model factor multiplying `(C'/kappa) x / n` in the deviation residual.
pub fn residual_factor(constants: &AssumptionConstants, n: usize) -> f64 {
    let a = constants.scale();
    let nf = n as f64;
    let log_na2 = (nf * a).ln().powi(2);
    match constants.regime {
        Regime::Bounded => a * constants.log_inv_epsilon().unwrap_or(0.0).powf(1.5) * log_na2,
        Regime::Unbounded => {
            a * constants.tail_scale.unwrap_or(1.0).powf(1.5) * log_na2 * nf.ln().powf(2.5)
        }
    }
}

/// `1 - 18 log(n) Sigma e^{-x}` (bounded) or `1 - 2/n - 18 log(n) Sigma e^{-x}`
/// (unbounded), floored at zero.
pub fn probability_budget(regime: Regime, n: usize, sigma: f64, x: f64) -> f64 {
    let nf = n as f64;
    let mut p = 1.0 - 18.0 * nf.ln() * sigma * (-x).exp();
    if regime == Regime::Unbounded {
        p -= 2.0 / nf;
    }
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexitySum {
    pub value: f64,
    /// Share of the sum carried by the largest-dimension models.
    pub tail_share: f64,
    pub tail_warning: bool,
}

/// `Sigma = sum_m log(A_m) e^{-D_m}` over a finite list of `(A_m, D_m)`.
pub fn complexity_sum<I>(models: I) -> ComplexitySum
where
    I: IntoIterator<Item = (f64, usize)>,
{
    let terms: Vec<(f64, usize)> = models
        .into_iter()
        .map(|(a, d)| (a.ln() * (-(d as f64)).exp(), d))
        .collect();
    let value: f64 = terms.iter().map(|t| t.0).sum();
    let max_d = terms.iter().map(|t| t.1).max().unwrap_or(0);
    let tail: f64 = terms.iter().filter(|t| t.1 == max_d).map(|t| t.0).sum();
    let tail_share = if value > 0.0 { tail / value } else { 0.0 };
    ComplexitySum {
        value,
        tail_share,
        tail_warning: terms.len() > 1 && tail_share > 0.01,
    }
}

fn log_ratio_or_e(v: f64, sigma: f64) -> f64 {
    (v / sigma).max(std::f64::consts::E).ln()
}

/// Right-hand side of the `sigma_m` balance equation; non-increasing in `sigma`.
pub fn sigma_rhs(a: f64, n: usize, dim: usize, sigma: f64) -> f64 {
    let v = a * (2.0 * n as f64).sqrt();
    let d1 = (dim + 1) as f64;
    let l = log_ratio_or_e(v, sigma);
    (1.0f64).min(v / sigma) * (d1 * l).sqrt() + a / sigma * d1 * l
}

/// Right-hand side of the dominating equation (without the `1 ∧ v/sigma` factor).
pub fn sigma_prime_rhs(a: f64, n: usize, dim: usize, sigma: f64) -> f64 {
    let v = a * (2.0 * n as f64).sqrt();
    let d1 = (dim + 1) as f64;
    let l = log_ratio_or_e(v, sigma);
    (d1 * l).sqrt() + a / sigma * d1 * l
}

fn bisect_fixed_point<F: Fn(f64) -> f64>(rhs: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let residual = |s: f64| rhs(s) - s;
    let (mut lo, mut hi) = (lo, hi);
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if !(r_lo > 0.0 && r_hi < 0.0) {
        return Err(Error::NoBracket(format!(
            "residual at [{lo}, {hi}] is ({r_lo}, {r_hi})"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if (hi - lo) <= tol && r.abs() <= tol {
            return Ok(mid);
        }
        if r > 0.0 {
            lo = mid;
        } else if r < 0.0 {
            hi = mid;
        } else {
            return Ok(mid);
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_sigma_inputs(a: f64, n: usize, dim: usize, tol: f64) -> Result<()> {
    if !(a >= 1.0) || !a.is_finite() || n < 2 || dim < 1 || !(tol > 0.0) {
        return Err(Error::NoBracket(format!(
            "invalid inputs A = {a}, n = {n}, D = {dim}, tol = {tol}"
        )));
    }
    Ok(())
}

/// Solve the `sigma_m` balance equation by bisection on `[tol, 10 v]`.
pub fn sigma_fixed_point(a: f64, n: usize, dim: usize, tol: f64) -> Result<f64> {
    check_sigma_inputs(a, n, dim, tol)?;
    let v = a * (2.0 * n as f64).sqrt();
    bisect_fixed_point(|s| sigma_rhs(a, n, dim, s), tol, 10.0 * v, tol)
}

/// Solve the dominating equation whose root `sigma'_m >= sigma_m` obeys the
/// explicit bracket of [`sigma_prime_bounds`].
pub fn sigma_prime_fixed_point(a: f64, n: usize, dim: usize, tol: f64) -> Result<f64> {
    check_sigma_inputs(a, n, dim, tol)?;
    let v = a * (2.0 * n as f64).sqrt();
    bisect_fixed_point(|s| sigma_prime_rhs(a, n, dim, s), tol, 10.0 * v, tol)
}

/// `(sqrt(A (D+1)), 2 sqrt(A (D+1)) log((n A) ∨ e))`.
pub fn sigma_prime_bounds(a: f64, n: usize, dim: usize) -> (f64, f64) {
    let base = (a * (dim + 1) as f64).sqrt();
    let l = (n as f64 * a).max(std::f64::consts::E).ln();
    (base, 2.0 * base * l)
}

/// A fitted candidate passed to [`select_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub name: String,
    pub dim: usize,
    pub constants: AssumptionConstants,
    pub theta_hat: Vec<f64>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub id: usize,
    pub dim: usize,
    pub theta_hat: Vec<f64>,
    /// `l_n(theta_hat) / n`
    pub mean_log_likelihood: f64,
    pub penalty: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub per_model: Vec<SelectionRow>,
    pub selected: usize,
    pub tie_break_applied: bool,
}

impl SelectionReport {
    pub fn selected_row(&self) -> &SelectionRow {
        self.per_model
            .iter()
            .find(|r| r.id == self.selected)
            .expect("selected id is one of the rows")
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Minimize `-l_n(theta_hat^m)/n + pen(m)`; ties go to the smaller `D_m`,
/// then to the smaller id.
pub fn select_model(fits: &[Candidate], spec: &PenaltySpec) -> Result<SelectionReport> {
    if fits.is_empty() {
        return Err(Error::EmptyModelList);
    }
    let n = spec.n as f64;
    let mut rows = Vec::with_capacity(fits.len());
    for f in fits {
        let pen = penalty(&f.constants, f.dim, spec)?;
        let mll = f.log_likelihood / n;
        rows.push(SelectionRow {
            id: f.id,
            dim: f.dim,
            theta_hat: f.theta_hat.clone(),
            mean_log_likelihood: mll,
            penalty: pen,
            criterion: -mll + pen,
        });
    }
    let (selected, tie) = argmin_rows(&rows);
    Ok(SelectionReport {
        per_model: rows,
        selected,
        tie_break_applied: tie,
    })
}

fn argmin_rows(rows: &[SelectionRow]) -> (usize, bool) {
    let mut best = &rows[0];
    let mut tie = false;
    for r in &rows[1..] {
        if nearly_equal(r.criterion, best.criterion) {
            tie = true;
            if (r.dim, r.id) < (best.dim, best.id) {
                best = r;
            }
        } else if r.criterion < best.criterion {
            best = r;
            tie = false;
        }
    }
    (best.id, tie)
}

/// Everything about one fitted model in one replication that does not
/// depend on the penalty constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub candidate: Candidate,
    /// `K_n(p^m_{theta_hat})`
    pub loss_at_fit: f64,
    /// Approximation of `inf_theta K_n(p^m_theta)`.
    pub loss_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFits {
    pub replication: usize,
    pub n: usize,
    pub models: Vec<FitSummary>,
}

/// Right-hand-side term of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub id: usize,
    pub penalty: f64,
    /// Residual including the selected-model term.
    pub residual: f64,
    /// `(1 + kappa) inf K_n(p^m) + 2 pen(m) + residual`
    pub bound: f64,
}

/// Both sides of the oracle inequality for one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub selected: usize,
    pub loss_selected: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// The model attaining the infimum on the right-hand side.
    pub rhs_model: usize,
    /// Residual for the fixed model `m` alone (selected-model term dropped).
    pub residual_fixed: f64,
    /// Residual including the selected-model term.
    pub residual_selected: f64,
    pub violated: bool,
    pub terms: Vec<BoundTerm>,
}

/// `(1 - kappa) K_n(p~) <= min_m [(1 + kappa) inf K_n(p^m) + 2 pen(m) + residual]`,
/// with the residual constant `C'` taken equal to `C`.
pub fn oracle_inequality(fits: &ReplicationFits, spec: &PenaltySpec, x: f64) -> Result<InequalityCheck> {
    let candidates: Vec<Candidate> = fits.models.iter().map(|f| f.candidate.clone()).collect();
    let report = select_model(&candidates, spec)?;
    let sel = fits
        .models
        .iter()
        .find(|f| f.candidate.id == report.selected)
        .expect("selected model exists");
    let n = fits.n;
    let scale = spec.c_constant / spec.kappa * x / n as f64;
    let sel_factor = residual_factor(&sel.candidate.constants, n);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut terms = Vec::with_capacity(fits.models.len());
    for (f, row) in fits.models.iter().zip(&report.per_model) {
        let fixed = scale * residual_factor(&f.candidate.constants, n);
        let residual = fixed + scale * sel_factor;
        let rhs = (1.0 + spec.kappa) * f.loss_inf + 2.0 * row.penalty + residual;
        terms.push(BoundTerm {
            id: f.candidate.id,
            penalty: row.penalty,
            residual,
            bound: rhs,
        });
        if best.is_none_or(|b| rhs < b.0) {
            best = Some((rhs, f.candidate.id, fixed));
        }
    }
    let (rhs, rhs_model, residual_fixed) = best.expect("at least one model");
    let lhs = (1.0 - spec.kappa) * sel.loss_at_fit;
    Ok(InequalityCheck {
        selected: report.selected,
        loss_selected: sel.loss_at_fit,
        lhs,
        rhs,
        rhs_model,
        residual_fixed,
        residual_selected: residual_fixed + scale * sel_factor,
        violated: lhs > rhs,
        terms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub c: f64,
    pub coverage: f64,
    pub mean_risk: f64,
    pub selection_frequency: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Smallest grid value reaching the coverage target.
    pub constant: f64,
    pub target: f64,
    pub curve: Vec<CalibrationPoint>,
}

impl CalibrationReport {
    /// Grid value with the smallest mean risk `K_n(p~)` among those reaching
    /// the coverage target (ties to the smaller constant).
    pub fn risk_optimal(&self) -> f64 {
        self.curve
            .iter()
            .filter(|p| p.coverage >= self.target)
            .fold(None::<&CalibrationPoint>, |best, p| match best {
                Some(b) if b.mean_risk <= p.mean_risk => Some(b),
                _ => Some(p),
            })
            .map(|p| p.c)
            .unwrap_or(self.constant)
    }
}

pub const DEFAULT_COVERAGE: f64 = 0.95;

/// Default grid: 8 points per decade from 1e-14 to 1e2.
pub fn default_grid() -> Vec<f64> {
    (0..=128).map(|k| 10f64.powf(-14.0 + k as f64 / 8.0)).collect()
}

/// Coverage curve over `grid` from precomputed replication fits; returns
/// the smallest constant with coverage at least `target`.
pub fn calibrate_from_fits(
    reps: &[ReplicationFits],
    regime: Regime,
    kappa: f64,
    x: f64,
    grid: &[f64],
    target: f64,
) -> Result<CalibrationReport> {
    if grid.is_empty() {
        return Err(Error::CalibrationFailed("empty grid".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::CalibrationFailed("grid must be nondecreasing".into()));
    }
    if reps.is_empty() {
        return Err(Error::CalibrationFailed("no calibration replications".into()));
    }
    let mut curve = Vec::with_capacity(grid.len());
    for &c in grid {
        if !(c > 0.0) {
            curve.push(CalibrationPoint {
                c,
                coverage: 0.0,
                mean_risk: f64::NAN,
                selection_frequency: BTreeMap::new(),
            });
            continue;
        }
        let mut covered = 0usize;
        let mut risk = 0.0;
        let mut freq: BTreeMap<usize, f64> = BTreeMap::new();
        for r in reps {
            let spec = PenaltySpec::new(regime, kappa, c, r.n)?;
            let check = oracle_inequality(r, &spec, x)?;
            if !check.violated {
                covered += 1;
            }
            risk += check.loss_selected;
            *freq.entry(check.selected).or_default() += 1.0;
        }
        let m = reps.len() as f64;
        freq.values_mut().for_each(|v| *v /= m);
        curve.push(CalibrationPoint {
            c,
            coverage: covered as f64 / m,
            mean_risk: risk / m,
            selection_frequency: freq,
        });
    }
    let constant = curve
        .iter()
        .find(|p| p.c > 0.0 && p.coverage >= target)
        .map(|p| p.c)
        .ok_or_else(|| {
            Error::CalibrationFailed(format!("no grid constant reaches coverage {target}"))
        })?;
    Ok(CalibrationReport {
        constant,
        target,
        curve,
    })
}

/// Simulate and fit `replications` independent replications with
/// `simulate_and_fit`, then calibrate on the coverage target.
pub fn calibrate_constant<S>(
    simulate_and_fit: S,
    replications: usize,
    regime: Regime,
    kappa: f64,
    x: f64,
    grid: &[f64],
) -> Result<CalibrationReport>
where
    S: Fn(usize) -> Result<ReplicationFits> + Sync,
{
    use rayon::prelude::*;
    let reps: Vec<ReplicationFits> = (0..replications)
        .into_par_iter()
        .map(&simulate_and_fit)
        .collect::<Result<_>>()?;
    calibrate_from_fits(&reps, regime, kappa, x, grid, DEFAULT_COVERAGE)
}

/// Expectation-form residual `(36 C'/kappa) Sigma A(n) log(1/eps)^{3/2} log(n A(n))^2 log(n)/n`
/// (bounded) or `(40 C'/kappa) Sigma A(n) B(n)^{3/2} log(n A(n))^2 log(n)^{7/2}/n`
/// (unbounded), with `C' = C`.
pub fn corollary_residual(constants: &[AssumptionConstants], sigma: f64, spec: &PenaltySpec) -> f64 {
    let n = spec.n as f64;
    let a_n = constants.iter().map(|c| c.scale()).fold(0.0, f64::max);
    let log_na2 = (n * a_n).ln().powi(2);
    let k = spec.c_constant / spec.kappa;
    match spec.regime {
        Regime::Bounded => {
            let li = constants
                .iter()
                .filter_map(|c| c.log_inv_epsilon())
                .fold(0.0, f64::max);
            36.0 * k * sigma * a_n * li.powf(1.5) * log_na2 * n.ln() / n
        }
        Regime::Unbounded => {
            let b_n = constants
                .iter()
                .filter_map(|c| c.tail_scale)
                .fold(1.0, f64::max);
            40.0 * k * sigma * a_n * b_n.powf(1.5) * log_na2 * n.ln().powf(3.5) / n
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NormId;
    use approx::assert_relative_eq;

    fn bounded(eps: f64, lm: f64) -> AssumptionConstants {
        AssumptionConstants::bounded(eps, lm, 1.0, NormId::Sup).unwrap()
    }

    #[test]
    fn bounded_penalty_reference_value() {
        let c = bounded((-2.0f64).exp(), 1.0);
        let spec = PenaltySpec::new(Regime::Bounded, 1.0, 1.0, 100).unwrap();
        let pen = penalty_bounded(&c, 3, &spec).unwrap();
        // 25 * 2^{3/2} * log(500)^2 * 3 / 100
        let expected = 25.0 * 2f64.powf(1.5) * 500f64.ln().powi(2) * 0.03;
        assert_relative_eq!(pen, expected, max_relative = 1e-14);
        assert_relative_eq!(pen, 81.93, max_relative = 1e-3);
        let double = penalty_bounded(&c, 6, &spec).unwrap();
        assert_relative_eq!(double, 2.0 * pen, max_relative = 1e-14);
    }

    #[test]
    fn unbounded_penalty_reference_value() {
        let c = AssumptionConstants::unbounded(1.0, 1.0, 1.0, NormId::Sup).unwrap();
        let spec = PenaltySpec::new(Regime::Unbounded, 1.0, 1.0, 3).unwrap();
        let pen = penalty_unbounded(&c, 1, &spec).unwrap();
        let expected = 4.0 * 3f64.ln().powf(3.5) * 6f64.ln().powi(2) / 3.0;
        assert_relative_eq!(pen, expected, max_relative = 1e-14);
        assert_relative_eq!(pen, 5.954, max_relative = 2e-3);
        assert_relative_eq!(
            penalty_unbounded(&c, 2, &spec).unwrap(),
            2.0 * pen,
            max_relative = 1e-14
        );
    }

    #[test]
    fn penalty_monotone_in_tail_scale() {
        let spec = PenaltySpec::new(Regime::Unbounded, 0.5, 0.1, 1000).unwrap();
        let mut prev = 0.0;
        for b in [1.0, 1.5, 2.0, 4.0, 10.0] {
            let c = AssumptionConstants::unbounded(b, 1.0, 1.0, NormId::L1).unwrap();
            let p = penalty_unbounded(&c, 4, &spec).unwrap();
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn regime_mismatch() {
        let c = bounded(0.1, 1.0);
        let spec = PenaltySpec::new(Regime::Unbounded, 1.0, 1.0, 10).unwrap();
        assert!(matches!(
            penalty_unbounded(&c, 1, &spec),
            Err(Error::RegimeMismatch { .. })
        ));
        assert!(matches!(
            penalty_bounded(&c, 1, &spec),
            Err(Error::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn penalty_spec_validation() {
        assert!(PenaltySpec::new(Regime::Bounded, 0.0, 1.0, 10).is_err());
        assert!(PenaltySpec::new(Regime::Bounded, 1.5, 1.0, 10).is_err());
        assert!(PenaltySpec::new(Regime::Bounded, 1.0, 0.0, 10).is_err());
        assert!(PenaltySpec::new(Regime::Bounded, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn complexity_sum_values() {
        let s = complexity_sum([(std::f64::consts::E, 1)]);
        assert_relative_eq!(s.value, (-1.0f64).exp(), max_relative = 1e-14);

        let nested: Vec<(f64, usize)> = (1..=10).map(|d| (5.0, d)).collect();
        let s = complexity_sum(nested.clone());
        let geo: f64 = (1..=10).map(|d| (-(d as f64)).exp()).sum();
        assert_relative_eq!(s.value, 5f64.ln() * geo, max_relative = 1e-14);
        assert_relative_eq!(s.value, 0.9366, max_relative = 1e-4);

        let mut more = nested;
        more.push((5.0, 50));
        let s2 = complexity_sum(more);
        assert!((s2.value - s.value).abs() < 1e-20);
        assert!(!s2.tail_warning);

        let heavy = complexity_sum([(5.0, 1), (5.0, 2)]);
        assert!(heavy.tail_warning);
    }

    #[test]
    fn budget_is_a_probability() {
        assert_eq!(probability_budget(Regime::Bounded, 100, 1.0, 0.0), 0.0);
        let x = (18.0 * 100f64.ln() * 0.5).ln() + 3.0;
        let b = probability_budget(Regime::Bounded, 100, 0.5, x);
        assert!(b > 0.0 && b <= 1.0);
        assert_relative_eq!(b, 1.0 - (-3.0f64).exp(), max_relative = 1e-12);
        let u = probability_budget(Regime::Unbounded, 100, 0.5, x);
        assert_relative_eq!(u, b - 0.02, max_relative = 1e-12);
    }

    fn cand(id: usize, dim: usize, ll: f64) -> Candidate {
        Candidate {
            id,
            name: format!("m{id}"),
            dim,
            constants: bounded((-2.0f64).exp(), 1.0),
            theta_hat: vec![],
            log_likelihood: ll,
        }
    }

    #[test]
    fn selection_argmin_and_ties() {
        // pen is linear in dim: choose C so that pen(1) = 0.1.
        let base = PenaltySpec::new(Regime::Bounded, 1.0, 1.0, 10).unwrap();
        let unit = penalty(&bounded((-2.0f64).exp(), 1.0), 1, &base).unwrap();
        let spec = PenaltySpec::new(Regime::Bounded, 1.0, 0.1 / unit, 10).unwrap();
        // (-l/n, pen) = (0.5, 0.1) and (0.4, 0.3)
        let r = select_model(&[cand(1, 1, -5.0), cand(2, 3, -4.0)], &spec).unwrap();
        assert_relative_eq!(r.per_model[0].criterion, 0.6, max_relative = 1e-12);
        assert_relative_eq!(r.per_model[1].criterion, 0.7, max_relative = 1e-12);
        assert_eq!(r.selected, 1);
        assert!(!r.tie_break_applied);

        // equal criteria with D = 2 and 3
        let r = select_model(&[cand(7, 3, -4.0), cand(9, 2, -5.0)], &spec).unwrap();
        assert_relative_eq!(r.per_model[0].criterion, r.per_model[1].criterion, max_relative = 1e-12);
        assert_eq!(r.selected, 9);
        assert!(r.tie_break_applied);

        let r = select_model(&[cand(3, 2, -1.0)], &spec).unwrap();
        assert_eq!(r.selected, 3);
        assert_eq!(
            select_model(&[], &spec).unwrap_err(),
            Error::EmptyModelList
        );
    }

    #[test]
    fn sigma_fixed_point_residual() {
        let s = sigma_fixed_point(5.0, 100, 3, 1e-10).unwrap();
        assert!((sigma_rhs(5.0, 100, 3, s) - s).abs() <= 1e-10);
        let sp = sigma_prime_fixed_point(5.0, 100, 3, 1e-10).unwrap();
        assert!(s <= sp + 1e-10);
        let (lo, hi) = sigma_prime_bounds(5.0, 100, 3);
        assert!(lo <= sp && sp <= hi);
    }

    #[test]
    fn sigma_rejects_bad_inputs() {
        assert!(matches!(sigma_fixed_point(0.5, 100, 3, 1e-10), Err(Error::NoBracket(_))));
        assert!(matches!(sigma_fixed_point(5.0, 1, 3, 1e-10), Err(Error::NoBracket(_))));
        assert!(matches!(sigma_fixed_point(5.0, 100, 0, 1e-10), Err(Error::NoBracket(_))));
    }

    fn toy_reps() -> Vec<ReplicationFits> {
        (0..20)
            .map(|r| {
                let noise = 0.001 * (r % 5) as f64;
                ReplicationFits {
                    replication: r,
                    n: 1000,
                    models: vec![
                        FitSummary {
                            candidate: cand(0, 1, -1000.0 * (0.2 + noise)),
                            loss_at_fit: 0.05,
                            loss_inf: 0.05,
                        },
                        FitSummary {
                            candidate: cand(1, 4, -1000.0 * (0.15 + noise)),
                            loss_at_fit: 0.004 + noise,
                            loss_inf: 0.0,
                        },
                    ],
                }
            })
            .collect()
    }

    #[test]
    fn calibration_singleton_and_zero_grids() {
        let reps = toy_reps();
        let rep = calibrate_from_fits(&reps, Regime::Bounded, 0.5, 20f64.ln(), &[1.0], 0.95).unwrap();
        assert_eq!(rep.constant, 1.0);
        let err = calibrate_from_fits(&reps, Regime::Bounded, 0.5, 20f64.ln(), &[0.0, 0.0], 0.95);
        assert!(matches!(err, Err(Error::CalibrationFailed(_))));
        let err = calibrate_from_fits(&reps, Regime::Bounded, 0.5, 20f64.ln(), &[], 0.95);
        assert!(matches!(err, Err(Error::CalibrationFailed(_))));
    }

    #[test]
    fn calibration_curve_frequencies_sum_to_one() {
        let reps = toy_reps();
        let rep =
            calibrate_from_fits(&reps, Regime::Bounded, 0.5, 20f64.ln(), &default_grid(), 0.95).unwrap();
        for p in &rep.curve {
            let s: f64 = p.selection_frequency.values().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        }
        assert!(rep.curve.iter().any(|p| p.c == rep.constant));
        assert!(rep.risk_optimal() >= rep.constant);
    }

    #[test]
    fn inequality_with_single_well_specified_model() {
        let reps = vec![ReplicationFits {
            replication: 0,
            n: 500,
            models: vec![FitSummary {
                candidate: cand(0, 2, -100.0),
                loss_at_fit: 0.001,
                loss_inf: 0.001,
            }],
        }];
        let spec = PenaltySpec::new(Regime::Bounded, 0.5, 1e-3, 500).unwrap();
        let chk = oracle_inequality(&reps[0], &spec, 1.0).unwrap();
        assert!(!chk.violated);
        assert!(chk.residual_selected >= chk.residual_fixed);
    }
}
