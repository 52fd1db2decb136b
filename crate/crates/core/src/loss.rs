//! Stochastic Kullback-Leibler loss, empirical variance and conditional
//! Hellinger distance along a trajectory, plus numerical checks of the
//! variance and log-ratio/Hellinger lemmas.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{common_refinement, Family, Law, Oracle, Regime};

/// `phi(u) = e^u - u - 1`, accurate near zero.
pub fn phi(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        u * u * (0.5 + u * (1.0 / 6.0 + u / 24.0))
    } else {
        u.exp_m1() - u
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepTerms {
    pub kl: f64,
    pub variance: f64,
    pub hellinger_sq: f64,
    pub dropped_cells: usize,
    pub max_abs_log_ratio: f64,
}

/// Divergence terms between a true law and a candidate law. `truncation`
/// keeps only cells with `|log(p*/p)| <= truncation` in the variance.
pub fn step_terms(truth: &Law, cand: &Law, truncation: Option<f64>) -> Result<StepTerms> {
    let cells = common_refinement(truth, cand)?;
    let mut out = StepTerms::default();
    for (mu, ls, lp) in cells {
        let ps = ls.exp();
        if ps == 0.0 || mu == 0.0 {
            continue;
        }
        let u = lp - ls;
        if !u.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "non-finite log-ratio ({ls}, {lp})"
            )));
        }
        out.kl += mu * ps * phi(u);
        out.max_abs_log_ratio = out.max_abs_log_ratio.max(u.abs());
        match truncation {
            Some(f) if u.abs() > f => out.dropped_cells += 1,
            _ => out.variance += mu * ps * u * u,
        }
        let d = (0.5 * ls).exp() - (0.5 * lp).exp();
        out.hellinger_sq += 0.5 * mu * d * d;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub k_n: f64,
    pub v_n: f64,
    pub hellinger_sq: f64,
    pub per_step_kl: Vec<f64>,
    pub f_inf: f64,
    /// Whether the variance used the truncated square.
    pub truncated: bool,
    pub dropped_cells: usize,
    pub max_abs_log_ratio: f64,
}

fn oracle_or_err<'a, D>(oracle: Option<&'a dyn Oracle<D>>) -> Result<&'a dyn Oracle<D>> {
    oracle.ok_or(Error::OracleUnavailable)
}

/// Loss report for already-evaluated law sequences.
pub fn loss_from_laws(truth: &[Law], cand: &[Law], f_inf: f64, truncate: bool) -> Result<LossReport> {
    if truth.len() != cand.len() || truth.is_empty() {
        return Err(Error::InvalidTrajectory(format!(
            "law sequences of length {} and {}",
            truth.len(),
            cand.len()
        )));
    }
    let n = truth.len() as f64;
    let trunc = truncate.then_some(f_inf);
    let mut per_step_kl = Vec::with_capacity(truth.len());
    let (mut v, mut h, mut dropped, mut max_lr) = (0.0, 0.0, 0usize, 0.0f64);
    for (ts, cs) in truth.iter().zip(cand) {
        let s = step_terms(ts, cs, trunc)?;
        per_step_kl.push(s.kl);
        v += s.variance;
        h += s.hellinger_sq;
        dropped += s.dropped_cells;
        max_lr = max_lr.max(s.max_abs_log_ratio);
    }
    Ok(LossReport {
        k_n: per_step_kl.iter().sum::<f64>() / n,
        v_n: v / n,
        hellinger_sq: h / n,
        per_step_kl,
        f_inf,
        truncated: truncate,
        dropped_cells: dropped,
        max_abs_log_ratio: max_lr,
    })
}

fn f_inf_for<F: Family>(family: &F, n: usize, regime: Regime) -> Result<f64> {
    let c = family.constants();
    match regime {
        Regime::Bounded => c
            .log_inv_epsilon()
            .map(|l| 2.0 * l)
            .ok_or(Error::RegimeMismatch { expected: Regime::Bounded }),
        Regime::Unbounded => c
            .tail_scale
            .map(|b| b * (n as f64).ln())
            .ok_or(Error::RegimeMismatch {
                expected: Regime::Unbounded,
            }),
    }
}

/// Full loss report for `p^m_theta` in the family's own regime.
pub fn loss_report<F: Family>(
    family: &F,
    theta: &[f64],
    oracle: Option<&dyn Oracle<F::Data>>,
    data: &F::Data,
) -> Result<LossReport> {
    let oracle = oracle_or_err(oracle)?;
    let regime = family.constants().regime;
    let truth = oracle.laws(data)?;
    let cand = family.laws(theta, data)?;
    let f_inf = f_inf_for(family, truth.len(), regime)?;
    loss_from_laws(&truth, &cand, f_inf, regime == Regime::Unbounded)
}

/// `K_n(p^m_theta)`: mean of the conditional KL divergences.
pub fn stochastic_kl<F: Family>(
    family: &F,
    theta: &[f64],
    oracle: Option<&dyn Oracle<F::Data>>,
    data: &F::Data,
) -> Result<LossReport> {
    loss_report(family, theta, oracle, data)
}

/// `V_n(p^m_theta)`, truncated at `F_inf = B log n` in the unbounded regime
/// and untruncated with `F_inf = 2 log(1/eps)` in the bounded one.
pub fn empirical_variance<F: Family>(
    family: &F,
    theta: &[f64],
    oracle: Option<&dyn Oracle<F::Data>>,
    data: &F::Data,
    regime: Regime,
) -> Result<f64> {
    let oracle = oracle_or_err(oracle)?;
    let truth = oracle.laws(data)?;
    let cand = family.laws(theta, data)?;
    let f_inf = f_inf_for(family, truth.len(), regime)?;
    Ok(loss_from_laws(&truth, &cand, f_inf, regime == Regime::Unbounded)?.v_n)
}

/// Mean conditional squared Hellinger distance `(1/n) sum_t h^2(p*_t, p_t)`.
pub fn conditional_hellinger<F: Family>(
    family: &F,
    theta: &[f64],
    oracle: Option<&dyn Oracle<F::Data>>,
    data: &F::Data,
) -> Result<f64> {
    Ok(loss_report(family, theta, oracle, data)?.hellinger_sq)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceLemmaRow {
    pub v_n: f64,
    pub bound: f64,
    pub ratio: f64,
    /// Steps where `|log(p*/p)|` exceeded `F_inf` in the bounded regime,
    /// i.e. the lemma's hypotheses did not hold.
    pub hypothesis_breaches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceLemmaReport {
    pub rows: Vec<VarianceLemmaRow>,
    pub max_ratio: f64,
    pub violations: usize,
}

fn lemma_row(report: &LossReport, regime: Regime) -> VarianceLemmaRow {
    let bound = 16.0 * report.f_inf * report.f_inf * report.k_n;
    let ratio = if report.v_n == 0.0 { 0.0 } else { report.v_n / bound };
    let breaches = if regime == Regime::Bounded && report.max_abs_log_ratio > report.f_inf {
        1
    } else {
        0
    };
    VarianceLemmaRow {
        v_n: report.v_n,
        bound,
        ratio,
        hypothesis_breaches: breaches,
    }
}

/// Evaluate `V_n <= 16 F_inf^2 K_n` for each parameter (0/0 counts as 0).
pub fn check_variance_lemma<F: Family>(
    family: &F,
    thetas: &[Vec<f64>],
    oracle: Option<&dyn Oracle<F::Data>>,
    data: &F::Data,
) -> Result<VarianceLemmaReport> {
    let regime = family.constants().regime;
    let mut rows = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let rep = loss_report(family, theta, oracle, data)?;
        rows.push(lemma_row(&rep, regime));
    }
    Ok(summarize_lemma(rows))
}

pub fn summarize_lemma(rows: Vec<VarianceLemmaRow>) -> VarianceLemmaReport {
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let violations = rows.iter().filter(|r| r.ratio > 1.0).count();
    VarianceLemmaReport {
        rows,
        max_ratio,
        violations,
    }
}

/// Variance-lemma row computed from a loss report already in hand.
pub fn variance_lemma_row(report: &LossReport, regime: Regime) -> VarianceLemmaRow {
    lemma_row(report, regime)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRatioHellingerReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn check_density(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidDensity(format!("{what} must be strictly positive")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDensity(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Both sides of
/// `P[(log p/q)^2 1{|log p/q| <= log 1/lambda}] <= 8 (1 + log^2 1/lambda) P[(sqrt(q/p) - 1)^2 1{...}]`
/// for discrete densities on a common finite alphabet.
pub fn check_logratio_hellinger(p: &[f64], q: &[f64], lambda: f64) -> Result<LogRatioHellingerReport> {
    if !(lambda > 0.0 && lambda <= 0.5) {
        return Err(Error::InvalidLambda(lambda));
    }
    check_density(p, "p")?;
    check_density(q, "q")?;
    if p.len() != q.len() {
        return Err(Error::InvalidDensity("alphabets differ".into()));
    }
    let cut = (1.0 / lambda).ln();
    let (mut lhs, mut h) = (0.0, 0.0);
    for (&pi, &qi) in p.iter().zip(q) {
        let lr = (pi / qi).ln();
        if lr.abs() <= cut {
            lhs += pi * lr * lr;
            let d = (qi / pi).sqrt() - 1.0;
            h += pi * d * d;
        }
    }
    let rhs = 8.0 * (1.0 + cut * cut) * h;
    Ok(LogRatioHellingerReport {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12) + 1e-300,
    })
}

/// Constants `(c_lo, c_hi)` with `c_lo u^2 <= phi(u) <= c_hi u^2` for `|u| <= f`.
pub fn phi_comparison_constants(f: f64) -> (f64, f64) {
    if f <= 0.0 {
        return (0.5, 0.5);
    }
    let f2 = f * f;
    (phi(-f) / f2, phi(f) / f2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_is_nonnegative_and_smooth() {
        for k in -200..=200 {
            let u = k as f64 * 0.05;
            assert!(phi(u) >= 0.0);
        }
        assert_relative_eq!(phi(1e-5), 0.5e-10, max_relative = 1e-4);
        assert_relative_eq!(phi(1.0), std::f64::consts::E - 2.0, max_relative = 1e-14);
    }

    #[test]
    fn identical_laws_give_zero() {
        let p = Law::from_probs(&[0.2, 0.3, 0.5]);
        let s = step_terms(&p, &p, None).unwrap();
        assert_eq!(s.kl, 0.0);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.hellinger_sq, 0.0);
    }

    #[test]
    fn uniform_vs_two_bin_histogram() {
        let truth = Law {
            mass: vec![1.0],
            log_density: vec![0.0],
        };
        let cand = Law {
            mass: vec![0.5, 0.5],
            log_density: vec![1.5f64.ln(), 0.5f64.ln()],
        };
        let s = step_terms(&truth, &cand, None).unwrap();
        assert_relative_eq!(s.kl, 0.5 * (4.0f64 / 3.0).ln(), max_relative = 1e-13);
        assert_relative_eq!(s.kl, 0.14384, max_relative = 1e-4);
        let v = 0.5 * 1.5f64.ln().powi(2) + 0.5 * 0.5f64.ln().powi(2);
        assert_relative_eq!(s.variance, v, max_relative = 1e-13);
        assert_relative_eq!(s.variance, 0.32240, max_relative = 1e-4);
        let h = 1.0 - (1.5f64.sqrt() + 0.5f64.sqrt()) / 2.0;
        assert_relative_eq!(s.hellinger_sq, h, max_relative = 1e-12);
        assert_relative_eq!(s.hellinger_sq, 0.034074, max_relative = 1e-4);
    }

    #[test]
    fn truncation_inactive_agrees_exactly() {
        let a = Law::from_probs(&[0.3, 0.7]);
        let b = Law::from_probs(&[0.4, 0.6]);
        let t = step_terms(&a, &b, Some(10.0)).unwrap();
        let u = step_terms(&a, &b, None).unwrap();
        assert_eq!(t.variance, u.variance);
        assert_eq!(t.dropped_cells, 0);
        let tight = step_terms(&a, &b, Some(0.2)).unwrap();
        assert_eq!(tight.dropped_cells, 1);
        assert!(tight.variance < u.variance);
    }

    #[test]
    fn logratio_hellinger_two_point_example() {
        let r = check_logratio_hellinger(&[0.5, 0.5], &[0.8, 0.2], 0.5).unwrap();
        // only the first atom has |log(p/q)| <= log 2
        let l1 = (0.5f64 / 0.8).ln();
        let lhs = 0.5 * l1 * l1;
        let d = (0.8f64 / 0.5).sqrt() - 1.0;
        let rhs = 8.0 * (1.0 + 2f64.ln().powi(2)) * 0.5 * d * d;
        assert_relative_eq!(r.lhs, lhs, max_relative = 1e-14);
        assert_relative_eq!(r.rhs, rhs, max_relative = 1e-14);
        assert!(r.holds);

        let same = check_logratio_hellinger(&[0.25; 4], &[0.25; 4], 0.1).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
        assert!(same.holds);
    }

    #[test]
    fn logratio_hellinger_rejects_bad_inputs() {
        assert_eq!(
            check_logratio_hellinger(&[0.5, 0.5], &[0.5, 0.5], 0.6).unwrap_err(),
            Error::InvalidLambda(0.6)
        );
        assert!(check_logratio_hellinger(&[0.5, 0.5], &[0.5, 0.5], 0.0).is_err());
        assert!(check_logratio_hellinger(&[1.0, 0.0], &[0.5, 0.5], 0.5).is_err());
    }

    #[test]
    fn phi_constants_bracket() {
        let (lo, hi) = phi_comparison_constants(2.0);
        for k in -100..=100 {
            let u = k as f64 * 0.02;
            if u == 0.0 {
                continue;
            }
            let r = phi(u) / (u * u);
            assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
        }
    }
}
