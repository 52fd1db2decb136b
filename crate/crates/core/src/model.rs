//! Shared model contracts: trajectories, assumption constants, parameter
//! sets, conditional laws and the partial log-likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which set of tail/Lipschitz assumptions a family is declared under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Bounded,
    Unbounded,
}

/// Norm used on a family's parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormId {
    Sup,
    L1,
    L2,
}

impl NormId {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            NormId::Sup => diffs.fold(0.0, f64::max),
            NormId::L1 => diffs.sum(),
            NormId::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

/// Per-model constants: density bound `epsilon` (bounded regime) or tail
/// scale `tail_scale` (unbounded regime), log-Lipschitz constant and
/// parameter-set diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub regime: Regime,
    pub epsilon: Option<f64>,
    pub tail_scale: Option<f64>,
    pub lipschitz: f64,
    pub diameter: f64,
    pub norm: NormId,
}

impl AssumptionConstants {
    pub fn bounded(epsilon: f64, lipschitz: f64, diameter: f64, norm: NormId) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.ln() < -1.0) {
            return Err(Error::InvalidConstants(format!(
                "epsilon = {epsilon} must satisfy 0 < epsilon < 1/e"
            )));
        }
        Self::check_lipschitz(lipschitz, diameter)?;
        Ok(Self {
            regime: Regime::Bounded,
            epsilon: Some(epsilon),
            tail_scale: None,
            lipschitz,
            diameter,
            norm,
        })
    }

    pub fn unbounded(tail_scale: f64, lipschitz: f64, diameter: f64, norm: NormId) -> Result<Self> {
        if !(tail_scale >= 1.0) || !tail_scale.is_finite() {
            return Err(Error::InvalidConstants(format!(
                "tail scale B = {tail_scale} must be >= 1"
            )));
        }
        Self::check_lipschitz(lipschitz, diameter)?;
        Ok(Self {
            regime: Regime::Unbounded,
            epsilon: None,
            tail_scale: Some(tail_scale),
            lipschitz,
            diameter,
            norm,
        })
    }

    fn check_lipschitz(lipschitz: f64, diameter: f64) -> Result<()> {
        if !(lipschitz > 0.0 && diameter > 0.0) || !(lipschitz * diameter).is_finite() {
            return Err(Error::InvalidConstants(format!(
                "L = {lipschitz} and M = {diameter} must be positive and finite"
            )));
        }
        if lipschitz * diameter < 1.0 {
            return Err(Error::InvalidConstants(format!(
                "L * M = {} must be >= 1",
                lipschitz * diameter
            )));
        }
        Ok(())
    }

    /// `log(1/epsilon)`, bounded regime only.
    pub fn log_inv_epsilon(&self) -> Option<f64> {
        self.epsilon.map(|e| -e.ln())
    }

    /// The scale `A_m`: `L M + 2 log(1/eps)` (bounded) or `L M + B` (unbounded).
    pub fn scale(&self) -> f64 {
        let lm = self.lipschitz * self.diameter;
        match self.regime {
            Regime::Bounded => lm + 2.0 * self.log_inv_epsilon().unwrap_or(0.0),
            Regime::Unbounded => lm + self.tail_scale.unwrap_or(1.0),
        }
    }

    /// Effective log-ratio bound `F_inf` at horizon `n`.
    pub fn f_inf(&self, n: usize) -> f64 {
        match self.regime {
            Regime::Bounded => 2.0 * self.log_inv_epsilon().unwrap_or(0.0),
            Regime::Unbounded => self.tail_scale.unwrap_or(1.0) * (n as f64).ln(),
        }
    }
}

/// One non-box constraint on a parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    /// `scale * sum_{i in indices} theta_i = target`
    LinearSum {
        indices: Vec<usize>,
        scale: f64,
        target: f64,
    },
    /// `floor <= sum of negative parts` and `sum of positive parts <= ceiling`.
    SignedParts { floor: f64, ceiling: f64 },
}

/// Box plus structured constraints describing `Theta_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

pub const FEASIBILITY_TOL: f64 = 1e-9;

impl ThetaSpace {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        debug_assert_eq!(lower.len(), upper.len());
        Self {
            lower,
            upper,
            constraints: Vec::new(),
        }
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    /// Length of the parameter vector (may exceed the free dimension).
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.len() {
            return Err(Error::ParameterOutsideModel(format!(
                "length {} != {}",
                theta.len(),
                self.len()
            )));
        }
        for (i, &v) in theta.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::ParameterOutsideModel(format!("theta[{i}] = {v}")));
            }
            let tol = FEASIBILITY_TOL * (1.0 + v.abs());
            if v < self.lower[i] - tol || v > self.upper[i] + tol {
                return Err(Error::ParameterOutsideModel(format!(
                    "theta[{i}] = {v} outside [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        for c in &self.constraints {
            match c {
                Constraint::LinearSum {
                    indices,
                    scale,
                    target,
                } => {
                    let s: f64 = indices.iter().map(|&i| theta[i]).sum::<f64>() * scale;
                    if (s - target).abs() > FEASIBILITY_TOL * (1.0 + target.abs()) * 10.0 {
                        return Err(Error::ParameterOutsideModel(format!(
                            "linear sum {s} != {target}"
                        )));
                    }
                }
                Constraint::SignedParts { floor, ceiling } => {
                    let (neg, pos) = signed_parts(theta);
                    if neg < floor - FEASIBILITY_TOL || pos > ceiling + FEASIBILITY_TOL {
                        return Err(Error::ParameterOutsideModel(format!(
                            "signed parts ({neg}, {pos}) outside [{floor}, {ceiling}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.check(theta).is_ok()
    }
}

/// Sums of the negative and of the positive coordinates.
pub fn signed_parts(theta: &[f64]) -> (f64, f64) {
    theta.iter().fold((0.0, 0.0), |(n, p), &v| {
        if v < 0.0 {
            (n + v, p)
        } else {
            (n, p + v)
        }
    })
}

/// A conditional law on a partition of the sample space into consecutive
/// cells: cell `k` has reference measure `mass[k]` and log-density
/// `log_density[k]`. Discrete laws use unit masses (counting measure).
#[derive(Debug, Clone, PartialEq)]
pub struct Law {
    pub mass: Vec<f64>,
    pub log_density: Vec<f64>,
}

impl Law {
    pub fn discrete(log_density: Vec<f64>) -> Self {
        Self {
            mass: vec![1.0; log_density.len()],
            log_density,
        }
    }

    pub fn from_probs(p: &[f64]) -> Self {
        Self::discrete(p.iter().map(|v| v.ln()).collect())
    }

    /// Total probability, `sum_k mass_k * exp(log_density_k)`.
    pub fn total(&self) -> f64 {
        self.mass
            .iter()
            .zip(&self.log_density)
            .map(|(m, l)| m * l.exp())
            .sum()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.mass
            .iter()
            .zip(&self.log_density)
            .map(|(m, l)| m * l.exp())
            .collect()
    }
}

/// Merge two laws onto their common refinement, yielding
/// `(cell measure, log p, log q)` triples. Both laws must partition the
/// same total measure.
pub fn common_refinement(p: &Law, q: &Law) -> Result<Vec<(f64, f64, f64)>> {
    if p.mass == q.mass {
        return Ok(p
            .mass
            .iter()
            .zip(p.log_density.iter().zip(&q.log_density))
            .map(|(&m, (&a, &b))| (m, a, b))
            .collect());
    }
    let total_p: f64 = p.mass.iter().sum();
    let total_q: f64 = q.mass.iter().sum();
    let tol = 1e-12 * total_p.max(1.0);
    if (total_p - total_q).abs() > tol || p.mass.is_empty() || q.mass.is_empty() {
        return Err(Error::QuadratureFailure(format!(
            "supports differ: total measure {total_p} vs {total_q}"
        )));
    }
    let mut out = Vec::with_capacity(p.mass.len() + q.mass.len());
    let (mut i, mut j) = (0, 0);
    let (mut end_p, mut end_q) = (p.mass[0], q.mass[0]);
    let mut pos = 0.0;
    while i < p.mass.len() && j < q.mass.len() {
        let end = end_p.min(end_q);
        let w = end - pos;
        if w > tol {
            out.push((w, p.log_density[i], q.log_density[j]));
        }
        pos = end;
        if end_p - end <= tol {
            i += 1;
            if i < p.mass.len() {
                end_p += p.mass[i];
            }
        }
        if end_q - end <= tol {
            j += 1;
            if j < q.mass.len() {
                end_q += q.mass[j];
            }
        }
    }
    Ok(out)
}

/// Observed data for one family: anything with a horizon `n`.
pub trait Trajectory {
    fn horizon(&self) -> usize;
}

/// A parametric model `m`: conditional laws `p^m_{theta,t}` for `t = 1..n`.
///
/// `laws` and `observed_log_densities` must be predictable: entry `t` reads
/// only data strictly before `t` (plus time-`t` covariates).
pub trait Family: Send + Sync {
    type Data: Trajectory + Sync;

    fn name(&self) -> String;

    /// Free dimension `D_m` (can be smaller than the parameter vector length).
    fn dim(&self) -> usize;

    fn constants(&self) -> &AssumptionConstants;

    fn theta_space(&self) -> &ThetaSpace;

    /// Conditional laws for every step, 0-based.
    fn laws(&self, theta: &[f64], data: &Self::Data) -> Result<Vec<Law>>;

    /// `log p^m_{theta,t}(X_t)` for every step.
    fn observed_log_densities(&self, theta: &[f64], data: &Self::Data) -> Result<Vec<f64>>;
}

/// True conditional laws `p*_t`, available only in simulation.
pub trait Oracle<D>: Send + Sync {
    fn laws(&self, data: &D) -> Result<Vec<Law>>;

    fn observed_log_densities(&self, data: &D) -> Result<Vec<f64>>;
}

/// A family at a fixed parameter, used as the simulation truth.
#[derive(Debug, Clone)]
pub struct FixedParameter<F> {
    pub family: F,
    pub theta: Vec<f64>,
}

impl<F: Family> Oracle<F::Data> for FixedParameter<F> {
    fn laws(&self, data: &F::Data) -> Result<Vec<Law>> {
        self.family.laws(&self.theta, data)
    }

    fn observed_log_densities(&self, data: &F::Data) -> Result<Vec<f64>> {
        self.family.observed_log_densities(&self.theta, data)
    }
}

fn check_horizon<D: Trajectory>(data: &D) -> Result<usize> {
    let n = data.horizon();
    if n < 2 {
        return Err(Error::InvalidTrajectory(format!("n = {n} < 2")));
    }
    Ok(n)
}

/// `l_n(theta) = sum_t log p^m_{theta,t}(X_t)`.
pub fn partial_log_likelihood<F: Family>(family: &F, theta: &[f64], data: &F::Data) -> Result<f64> {
    check_horizon(data)?;
    family.theta_space().check(theta)?;
    let terms = family.observed_log_densities(theta, data)?;
    let mut total = 0.0;
    for (t, v) in terms.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteDensity { t: t + 1 });
        }
        total += v;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    /// Index into the theta sample, `None` for the oracle.
    pub theta_index: Option<usize>,
    pub t: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailQuantile {
    pub y: f64,
    pub exceed_fraction: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub min_density: f64,
    pub max_density: f64,
    pub oracle_min: Option<f64>,
    pub oracle_max: Option<f64>,
    pub violations: Vec<BoundViolation>,
    pub tail: Vec<TailQuantile>,
}

impl BoundsReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.tail.iter().all(|q| q.exceed_fraction <= q.allowed)
    }
}

/// Diagnostic check of the density bounds (bounded regime) or of the
/// log-ratio tails (unbounded regime) along one trajectory.
pub fn check_assumption_bounds<F: Family>(
    family: &F,
    data: &F::Data,
    theta_sample: &[Vec<f64>],
    oracle: Option<&dyn Oracle<F::Data>>,
) -> BoundsReport {
    let mut rows: Vec<(Option<usize>, Vec<f64>)> = Vec::new();
    for (k, theta) in theta_sample.iter().enumerate() {
        if let Ok(v) = family.observed_log_densities(theta, data) {
            rows.push((Some(k), v));
        }
    }
    let mut oracle_min = None;
    let mut oracle_max = None;
    if let Some(o) = oracle {
        if let Ok(v) = o.observed_log_densities(data) {
            oracle_min = Some(v.iter().map(|l| l.exp()).fold(f64::INFINITY, f64::min));
            oracle_max = Some(v.iter().map(|l| l.exp()).fold(f64::NEG_INFINITY, f64::max));
            rows.push((None, v));
        }
    }
    let mut min_density = f64::INFINITY;
    let mut max_density = f64::NEG_INFINITY;
    for (idx, row) in &rows {
        if idx.is_none() {
            continue;
        }
        for l in row {
            min_density = min_density.min(l.exp());
            max_density = max_density.max(l.exp());
        }
    }
    let constants = family.constants();
    let mut violations = Vec::new();
    let mut tail = Vec::new();
    match constants.regime {
        Regime::Bounded => {
            let eps = constants.epsilon.unwrap_or(0.0);
            for (idx, row) in &rows {
                for (t, l) in row.iter().enumerate() {
                    let d = l.exp();
                    if d < eps || d > 1.0 / eps || !d.is_finite() {
                        violations.push(BoundViolation {
                            theta_index: *idx,
                            t: t + 1,
                            density: d,
                        });
                    }
                }
            }
        }
        Regime::Unbounded => {
            let b = constants.tail_scale.unwrap_or(1.0);
            let n = data.horizon();
            let mut sup = vec![0.0f64; n];
            for t in 0..n {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for (_, row) in &rows {
                    lo = lo.min(row[t]);
                    hi = hi.max(row[t]);
                }
                sup[t] = if rows.is_empty() { 0.0 } else { hi - lo };
            }
            for y in [1.0, 2.0, 3.0, 4.0, 5.0] {
                let exceed = sup.iter().filter(|&&s| s > b * y).count() as f64 / n.max(1) as f64;
                tail.push(TailQuantile {
                    y,
                    exceed_fraction: exceed,
                    allowed: (-y as f64).exp(),
                });
            }
        }
    }
    BoundsReport {
        min_density: if min_density.is_finite() { min_density } else { f64::NAN },
        max_density: if max_density.is_finite() { max_density } else { f64::NAN },
        oracle_min,
        oracle_max,
        violations,
        tail,
    }
}

/// Largest observed `|log(p_delta / p_theta)| / ||delta - theta||` over the
/// given pairs and all steps.
pub fn estimate_lipschitz<F: Family>(family: &F, data: &F::Data, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let norm = family.constants().norm;
    let mut best = 0.0f64;
    for (delta, theta) in pairs {
        let space = family.theta_space();
        space.check(delta)?;
        space.check(theta)?;
        let a = family.observed_log_densities(delta, data)?;
        let b = family.observed_log_densities(theta, data)?;
        let max_lr = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let dist = norm.distance(delta, theta);
        if dist == 0.0 {
            if max_lr > 1e-12 {
                return Err(Error::ZeroDistance { log_ratio: max_lr });
            }
            continue;
        }
        best = best.max(max_lr / dist);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_validation() {
        assert!(AssumptionConstants::bounded(0.5, 1.0, 1.0, NormId::Sup).is_err());
        assert!(AssumptionConstants::bounded(0.1, 0.5, 1.0, NormId::Sup).is_err());
        assert!(AssumptionConstants::unbounded(0.5, 1.0, 1.0, NormId::Sup).is_err());
        let c = AssumptionConstants::bounded((-2.0f64).exp(), 1.0, 1.0, NormId::Sup).unwrap();
        assert!((c.scale() - 5.0).abs() < 1e-12);
        assert!((c.f_inf(100) - 4.0).abs() < 1e-12);
        let u = AssumptionConstants::unbounded(2.0, 1.0, 1.0, NormId::L1).unwrap();
        assert!((u.scale() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_of_unequal_partitions() {
        let p = Law {
            mass: vec![0.5, 0.5],
            log_density: vec![1.5f64.ln(), 0.5f64.ln()],
        };
        let q = Law {
            mass: vec![0.25; 4],
            log_density: vec![0.0; 4],
        };
        let cells = common_refinement(&p, &q).unwrap();
        assert_eq!(cells.len(), 4);
        let total: f64 = cells.iter().map(|c| c.0).sum();
        assert!((total - 1.0).abs() < 1e-15);

        let thirds = Law {
            mass: vec![1.0 / 3.0; 3],
            log_density: vec![0.0; 3],
        };
        let cells = common_refinement(&p, &thirds).unwrap();
        assert_eq!(cells.len(), 4);
        assert!((cells[1].0 - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_rejects_mismatched_support() {
        let p = Law::discrete(vec![0.0; 3]);
        let q = Law::discrete(vec![0.0; 4]);
        assert!(matches!(common_refinement(&p, &q), Err(Error::QuadratureFailure(_))));
    }

    #[test]
    fn signed_parts_constraint() {
        let space = ThetaSpace::boxed(vec![f64::NEG_INFINITY; 3], vec![f64::INFINITY; 3])
            .with(Constraint::SignedParts { floor: -1.0, ceiling: 1.0 });
        assert!(space.contains(&[0.5, -0.5, 0.4]));
        assert!(!space.contains(&[0.7, -0.5, 0.4]));
        assert!(!space.contains(&[0.0, -0.6, -0.6]));
    }

    #[test]
    fn norms() {
        let a = [1.0, -2.0];
        let b = [0.0, 0.0];
        assert_eq!(NormId::Sup.distance(&a, &b), 2.0);
        assert_eq!(NormId::L1.distance(&a, &b), 3.0);
        assert!((NormId::L2.distance(&a, &b) - 5f64.sqrt()).abs() < 1e-15);
    }
}
