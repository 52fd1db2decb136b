//! Discrete-time spiking networks: Bernoulli spike trains whose conditional
//! rate is `phi` of a weighted sum of past spikes (Hawkes), optionally with
//! memory reset at the target neuron's last spike (Galves-Löcherbach).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AssumptionConstants, Constraint, Family, Law, NormId, ThetaSpace, Trajectory, FEASIBILITY_TOL,
};
use crate::optim::{cholesky_solve, projected_gradient_ascent, AscentOptions};

/// Spikes of neurons `0..neurons` on times `-window..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    window: usize,
    n: usize,
    spikes: Vec<Vec<u8>>,
}

impl SpikeRaster {
    pub fn new(window: usize, n: usize, spikes: Vec<Vec<u8>>) -> Result<Self> {
        if spikes.is_empty() {
            return Err(Error::InvalidTrajectory("raster has no neurons".into()));
        }
        for row in &spikes {
            if row.len() != window + n + 1 {
                return Err(Error::InvalidTrajectory(format!(
                    "row length {} != {}",
                    row.len(),
                    window + n + 1
                )));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::InvalidTrajectory("spikes must be 0 or 1".into()));
            }
        }
        Ok(Self { window, n, spikes })
    }

    pub fn neurons(&self) -> usize {
        self.spikes.len()
    }

    /// History length `A` before time 1 (times `-A..=0`).
    pub fn window(&self) -> usize {
        self.window
    }

    /// `X^j_t` for `-window <= t <= n`.
    pub fn get(&self, j: usize, t: i64) -> u8 {
        self.spikes[j][(t + self.window as i64) as usize]
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.spikes[j]
    }

    /// Spikes of neuron `j` at times `1..=n`.
    pub fn observations(&self, j: usize) -> &[u8] {
        &self.spikes[j][self.window + 1..]
    }

    /// Dense CSV: one row per neuron, one column per time, header with offsets.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["neuron".to_string()];
        header.extend((-(self.window as i64)..=self.n as i64).map(|t| t.to_string()));
        out.write_record(&header)?;
        for (j, row) in self.spikes.iter().enumerate() {
            let mut rec = vec![j.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let offsets: Vec<i64> = header
            .iter()
            .skip(1)
            .map(|s| s.parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidTrajectory(format!("bad time offset: {e}")))?;
        let (first, last) = match (offsets.first(), offsets.last()) {
            (Some(&a), Some(&b)) if a <= 0 && b >= 1 => (a, b),
            _ => return Err(Error::InvalidTrajectory("header must span -A..n with n >= 1".into())),
        };
        if offsets.iter().zip(first..).any(|(&o, e)| o != e) {
            return Err(Error::InvalidTrajectory("time offsets must be consecutive".into()));
        }
        let mut spikes = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.get(0).and_then(|s| s.parse::<usize>().ok()) != Some(k) {
                return Err(Error::InvalidTrajectory(format!("row {k} has wrong neuron id")));
            }
            let row: Vec<u8> = rec
                .iter()
                .skip(1)
                .map(|s| match s {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::InvalidTrajectory(format!("spike value {other:?}"))),
                })
                .collect::<Result<_>>()?;
            spikes.push(row);
        }
        Self::new((-first) as usize, last as usize, spikes)
    }
}

impl Trajectory for SpikeRaster {
    fn horizon(&self) -> usize {
        self.n
    }
}

/// Increasing rate function with range in `(0, 1)` on the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateFunction {
    Sigmoid,
    /// `mu + x`
    Linear { mu: f64 },
}

impl RateFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            RateFunction::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            RateFunction::Linear { mu } => mu + x,
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            RateFunction::Sigmoid => (y / (1.0 - y)).ln(),
            RateFunction::Linear { mu } => y - mu,
        }
    }

    /// Lipschitz constant of `phi`.
    pub fn lipschitz(self) -> f64 {
        match self {
            RateFunction::Sigmoid => 0.25,
            RateFunction::Linear { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hawkes,
    Gl,
}

/// Rate model for one target neuron: `theta[k * lag + u - 1]` weighs
/// `X^{neighborhood[k]}_{t-u}`.
#[derive(Debug, Clone)]
pub struct NeuroModel {
    target: usize,
    neighborhood: Vec<usize>,
    lag: usize,
    variant: Variant,
    phi: RateFunction,
    epsilon: f64,
    constants: AssumptionConstants,
    space: ThetaSpace,
}

impl NeuroModel {
    pub fn new(
        target: usize,
        neighborhood: Vec<usize>,
        lag: usize,
        variant: Variant,
        phi: RateFunction,
        epsilon: f64,
    ) -> Result<Self> {
        if neighborhood.is_empty() || lag == 0 {
            return Err(Error::InvalidModel("empty neighborhood or zero lag".into()));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidModel(format!("epsilon = {epsilon}")));
        }
        let floor = phi.inverse(epsilon);
        let ceiling = phi.inverse(1.0 - epsilon);
        if !(floor <= 0.0 && ceiling >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "phi(0) = {} outside [eps, 1 - eps]",
                phi.eval(0.0)
            )));
        }
        let constants = AssumptionConstants::bounded(
            epsilon,
            2.0 * phi.lipschitz() / epsilon,
            floor.abs() + ceiling.abs(),
            NormId::L1,
        )?;
        let d = neighborhood.len() * lag;
        let space = ThetaSpace::boxed(vec![floor; d], vec![ceiling; d])
            .with(Constraint::SignedParts { floor, ceiling });
        Ok(Self {
            target,
            neighborhood,
            lag,
            variant,
            phi,
            epsilon,
            constants,
            space,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn neighborhood(&self) -> &[usize] {
        &self.neighborhood
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn phi(&self) -> RateFunction {
        self.phi
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(phi^-1(eps), phi^-1(1 - eps))`.
    pub fn signed_bounds(&self) -> (f64, f64) {
        (self.phi.inverse(self.epsilon), self.phi.inverse(1.0 - self.epsilon))
    }

    fn check_raster(&self, raster: &SpikeRaster) -> Result<()> {
        if raster.window() < self.lag {
            return Err(Error::InsufficientHistory { t: 1, lag: self.lag });
        }
        let max = self.neighborhood.iter().chain([&self.target]).max().copied().unwrap_or(0);
        if max >= raster.neurons() {
            return Err(Error::InvalidTrajectory(format!(
                "neuron {max} missing from raster with {} neurons",
                raster.neurons()
            )));
        }
        Ok(())
    }

    /// Active regressor indices at every `t = 1..n`.
    pub fn active_features(&self, raster: &SpikeRaster) -> Result<Vec<Vec<u32>>> {
        self.check_raster(raster)?;
        let window = raster.window() as i64;
        let mut last_spike = -window - 1;
        for s in -window..=0 {
            if raster.get(self.target, s) == 1 {
                last_spike = s;
            }
        }
        let mut out = Vec::with_capacity(raster.horizon());
        for t in 1..=raster.horizon() as i64 {
            let reach = match self.variant {
                Variant::Hawkes => self.lag as i64,
                Variant::Gl => (self.lag as i64).min(t - last_spike),
            };
            let mut active = Vec::new();
            for (k, &j) in self.neighborhood.iter().enumerate() {
                for u in 1..=reach {
                    if raster.get(j, t - u) == 1 {
                        active.push((k * self.lag + u as usize - 1) as u32);
                    }
                }
            }
            out.push(active);
            if raster.get(self.target, t) == 1 {
                last_spike = t;
            }
        }
        Ok(out)
    }

    /// Spike probabilities `p_t = phi(eta_t)` for `t = 1..n`.
    pub fn spike_probs(&self, theta: &[f64], raster: &SpikeRaster) -> Result<Vec<f64>> {
        self.space.check(theta)?;
        Ok(self
            .active_features(raster)?
            .iter()
            .map(|a| self.phi.eval(a.iter().map(|&k| theta[k as usize]).sum()))
            .collect())
    }

    /// Euclidean projection onto the feasible set: the positive and negative
    /// coordinates are soft-thresholded towards zero until their sums meet
    /// the bounds; the threshold is found by bisection.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        let (floor, ceiling) = self.signed_bounds();
        let mut out = theta.to_vec();
        shrink_part(&mut out, ceiling, true);
        shrink_part(&mut out, -floor, false);
        out
    }

    /// Uniform draw in the box, then projected.
    pub fn random_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (floor, ceiling) = self.signed_bounds();
        let raw: Vec<f64> = (0..self.dim()).map(|_| rng.random_range(floor..=ceiling)).collect();
        self.project(&raw)
    }

    /// Expand to the full `(neurons x lag)` layout with zeroes outside the
    /// neighborhood and lags.
    pub fn expand(&self, theta: &[f64], neurons: usize, lag: usize) -> Vec<f64> {
        let mut out = vec![0.0; neurons * lag];
        for (k, &j) in self.neighborhood.iter().enumerate() {
            for u in 0..self.lag.min(lag) {
                out[j * lag + u] = theta[k * self.lag + u];
            }
        }
        out
    }
}

fn shrink_part(v: &mut [f64], bound: f64, positive: bool) {
    let part = |x: f64| if positive { x.max(0.0) } else { (-x).max(0.0) };
    let total: f64 = v.iter().map(|&x| part(x)).sum();
    if total <= bound {
        return;
    }
    let (mut lo, mut hi) = (0.0, v.iter().map(|&x| part(x)).fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|&x| (part(x) - mid).max(0.0)).sum();
        if s > bound {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * (1.0 + hi) {
            break;
        }
    }
    for x in v.iter_mut() {
        let p = part(*x);
        if p > 0.0 {
            let shrunk = (p - hi).max(0.0);
            *x = if positive { shrunk } else { -shrunk };
        }
    }
}

impl Family for NeuroModel {
    type Data = SpikeRaster;

    fn name(&self) -> String {
        let v: Vec<String> = self.neighborhood.iter().map(|j| j.to_string()).collect();
        format!("neuro-V{}-A{}", v.join("."), self.lag)
    }

    fn dim(&self) -> usize {
        self.neighborhood.len() * self.lag
    }

    fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    fn theta_space(&self) -> &ThetaSpace {
        &self.space
    }

    fn laws(&self, theta: &[f64], data: &SpikeRaster) -> Result<Vec<Law>> {
        Ok(self
            .spike_probs(theta, data)?
            .into_iter()
            .map(|p| Law::discrete(vec![(1.0 - p).ln(), p.ln()]))
            .collect())
    }

    fn observed_log_densities(&self, theta: &[f64], data: &SpikeRaster) -> Result<Vec<f64>> {
        let probs = self.spike_probs(theta, data)?;
        Ok(probs
            .iter()
            .zip(data.observations(self.target))
            .map(|(&p, &x)| if x == 1 { p.ln() } else { (1.0 - p).ln() })
            .collect())
    }
}

/// `phi(sum theta X^j_{t-u})` at a single time `t >= 1`.
pub fn spike_prob(model: &NeuroModel, theta: &[f64], raster: &SpikeRaster, t: usize) -> Result<f64> {
    if t == 0 || t > raster.horizon() {
        return Err(Error::InvalidTrajectory(format!("t = {t} outside 1..={}", raster.horizon())));
    }
    Ok(model.spike_probs(theta, raster)?[t - 1])
}

/// Weights of the whole network: `weights[i][j * lag + u - 1]` is the
/// effect of `X^j_{t-u}` on neuron `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub lag: usize,
    pub phi: RateFunction,
    pub epsilon: f64,
    pub weights: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn neurons(&self) -> usize {
        self.weights.len()
    }

    /// Interval check: every reachable rate lies in `[eps, 1 - eps]`.
    pub fn validate(&self) -> Result<()> {
        let width = self.neurons() * self.lag;
        for w in &self.weights {
            if w.len() != width {
                return Err(Error::InvalidModel(format!("weight row length {} != {width}", w.len())));
            }
            let (neg, pos) = crate::model::signed_parts(w);
            for rate in [self.phi.eval(neg), self.phi.eval(pos)] {
                let (lo, hi) = (self.epsilon, 1.0 - self.epsilon);
                if !(rate >= lo - FEASIBILITY_TOL && rate <= hi + FEASIBILITY_TOL) {
                    return Err(Error::RateOutOfRange { rate, lo, hi });
                }
            }
        }
        Ok(())
    }

    /// The true model of neuron `i` (full neighborhood, full lag).
    pub fn truth(&self, i: usize, variant: Variant) -> Result<(NeuroModel, Vec<f64>)> {
        let model = NeuroModel::new(
            i,
            (0..self.neurons()).collect(),
            self.lag,
            variant,
            self.phi,
            self.epsilon,
        )?;
        Ok((model, self.weights[i].clone()))
    }
}

/// Simulate times `-window..=n` (`window >= lag`); the first `window + 1`
/// steps are burn-in from an all-zero pre-history.
pub fn simulate_network<R: Rng + ?Sized>(
    params: &NetworkParams,
    variant: Variant,
    n: usize,
    window: usize,
    rng: &mut R,
) -> Result<SpikeRaster> {
    let pre = vec![vec![0u8; params.lag]; params.neurons()];
    simulate_network_from(params, variant, n, window, &pre, rng)
}

/// As [`simulate_network`] with a given pre-history (`lag` columns per neuron).
pub fn simulate_network_from<R: Rng + ?Sized>(
    params: &NetworkParams,
    variant: Variant,
    n: usize,
    window: usize,
    pre: &[Vec<u8>],
    rng: &mut R,
) -> Result<SpikeRaster> {
    params.validate()?;
    let (f, a) = (params.neurons(), params.lag);
    if window < a {
        return Err(Error::InsufficientHistory { t: 1, lag: a });
    }
    if pre.len() != f || pre.iter().any(|r| r.len() != a) {
        return Err(Error::InvalidTrajectory("pre-history must be neurons x lag".into()));
    }
    let steps = window + n + 1;
    let mut buf: Vec<Vec<u8>> = pre
        .iter()
        .map(|r| {
            let mut v = r.clone();
            v.reserve(steps);
            v
        })
        .collect();
    let mut last: Vec<Option<usize>> = (0..f).map(|i| pre[i].iter().rposition(|&x| x == 1)).collect();
    let mut fired = vec![0u8; f];
    for s in a..a + steps {
        for i in 0..f {
            let reach = match (variant, last[i]) {
                (Variant::Gl, Some(l)) => a.min(s - l),
                _ => a,
            };
            let w = &params.weights[i];
            let mut eta = 0.0;
            for (j, row) in buf.iter().enumerate() {
                for u in 1..=reach {
                    if row[s - u] == 1 {
                        eta += w[j * a + u - 1];
                    }
                }
            }
            let p = params.phi.eval(eta);
            fired[i] = u8::from(rng.random::<f64>() < p);
        }
        for i in 0..f {
            buf[i].push(fired[i]);
            if fired[i] == 1 {
                last[i] = Some(s);
            }
        }
    }
    let spikes = buf.into_iter().map(|r| r[a..].to_vec()).collect();
    SpikeRaster::new(window, n, spikes)
}

/// Rows grouped by identical active-feature sets: `(active, total weight,
/// spike weight)`.
#[derive(Debug, Clone)]
pub struct Design {
    groups: Vec<(Vec<u32>, f64, f64)>,
    dim: usize,
}

impl Design {
    /// `labels[t]` in `[0, 1]`: observed spikes or true spike probabilities.
    pub fn new(model: &NeuroModel, raster: &SpikeRaster, labels: &[f64]) -> Result<Self> {
        let active = model.active_features(raster)?;
        if labels.len() != active.len() {
            return Err(Error::InvalidTrajectory("label length mismatch".into()));
        }
        let mut map: BTreeMap<Vec<u32>, (f64, f64)> = BTreeMap::new();
        for (a, &y) in active.into_iter().zip(labels) {
            let e = map.entry(a).or_insert((0.0, 0.0));
            e.0 += 1.0;
            e.1 += y;
        }
        Ok(Self {
            groups: map.into_iter().map(|(a, (w, s))| (a, w, s)).collect(),
            dim: model.dim(),
        })
    }

    /// Bernoulli log-likelihood, gradient and Hessian (row-major).
    pub fn evaluate(&self, phi: RateFunction, theta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for (active, w, s) in &self.groups {
            let eta: f64 = active.iter().map(|&k| theta[k as usize]).sum();
            let p = phi.eval(eta);
            if !(p > 0.0 && p < 1.0) {
                return (f64::NEG_INFINITY, grad, hess);
            }
            let f = w - s;
            value += s * p.ln() + f * (1.0 - p).ln();
            let (g1, g2) = match phi {
                RateFunction::Sigmoid => (s - w * p, -w * p * (1.0 - p)),
                RateFunction::Linear { .. } => {
                    (s / p - f / (1.0 - p), -s / (p * p) - f / ((1.0 - p) * (1.0 - p)))
                }
            };
            for &a in active {
                grad[a as usize] += g1;
                for &b in active {
                    hess[a as usize * d + b as usize] += g2;
                }
            }
        }
        (value, grad, hess)
    }

    pub fn value(&self, phi: RateFunction, theta: &[f64]) -> f64 {
        self.evaluate(phi, theta).0
    }
}

/// Maximize the design's concave log-likelihood over the model's feasible
/// set: projected Newton steps, then a projected-gradient polish.
pub fn maximize_design(model: &NeuroModel, design: &Design) -> (Vec<f64>, f64) {
    let phi = model.phi;
    let d = model.dim();
    let mut x = vec![0.0; d];
    let (mut fx, mut g, mut h) = design.evaluate(phi, &x);
    for _ in 0..100 {
        let neg_h: Vec<f64> = h.iter().map(|v| -v).collect();
        let scale = (0..d).map(|i| neg_h[i * d + i]).fold(0.0, f64::max).max(1.0);
        let Some(dir) = cholesky_solve(&neg_h, &g, 1e-10 * scale) else { break };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let cand = model.project(&cand);
            let moved: f64 = cand.iter().zip(&x).zip(&g).map(|((c, a), gi)| (c - a) * gi).sum();
            if moved > 0.0 {
                let (fc, gc, hc) = design.evaluate(phi, &cand);
                if fc.is_finite() && fc >= fx + 1e-4 * moved {
                    let gain = fc - fx;
                    x = cand;
                    fx = fc;
                    g = gc;
                    h = hc;
                    accepted = true;
                    if gain <= 1e-13 * (1.0 + fx.abs()) {
                        step = 0.0;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || step == 0.0 {
            break;
        }
    }
    let opts = AscentOptions {
        max_iter: 200,
        tol: 1e-14,
        initial_step: 1e-3,
    };
    let (y, fy) = projected_gradient_ascent(
        |t| {
            let (v, g, _) = design.evaluate(phi, t);
            (v, g)
        },
        |t| model.project(t),
        x.clone(),
        opts,
    );
    if fy >= fx {
        (y, fy)
    } else {
        (x, fx)
    }
}

/// Maximum-likelihood fit of the target neuron's rate model.
pub fn neuro_mle(model: &NeuroModel, raster: &SpikeRaster) -> Result<(Vec<f64>, f64)> {
    let labels: Vec<f64> = raster.observations(model.target).iter().map(|&x| x as f64).collect();
    let design = Design::new(model, raster, &labels)?;
    Ok(maximize_design(model, &design))
}

/// Minimizer of `K_n` over the model given the true spike probabilities.
pub fn min_loss_neuro(model: &NeuroModel, raster: &SpikeRaster, truth_probs: &[f64]) -> Result<Vec<f64>> {
    let design = Design::new(model, raster, truth_probs)?;
    Ok(maximize_design(model, &design).0)
}

/// `(1/n) sum_t (eta*_t - eta_t)^2` between the true and the model linear
/// predictors along the realized raster.
pub fn average_square_distance(
    truth: &NeuroModel,
    truth_theta: &[f64],
    model: &NeuroModel,
    theta: &[f64],
    raster: &SpikeRaster,
) -> Result<f64> {
    let a = truth.active_features(raster)?;
    let b = model.active_features(raster)?;
    let n = raster.horizon() as f64;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| {
            let e1: f64 = x.iter().map(|&k| truth_theta[k as usize]).sum();
            let e2: f64 = y.iter().map(|&k| theta[k as usize]).sum();
            (e1 - e2).powi(2)
        })
        .sum::<f64>()
        / n)
}

/// Nested candidates: neighborhoods are prefixes of `order`, crossed with
/// the given lags.
pub fn nested_candidates(
    target: usize,
    order: &[usize],
    lags: &[usize],
    variant: Variant,
    phi: RateFunction,
    epsilon: f64,
) -> Result<Vec<NeuroModel>> {
    let mut out = Vec::new();
    for k in 1..=order.len() {
        for &lag in lags {
            out.push(NeuroModel::new(target, order[..k].to_vec(), lag, variant, phi, epsilon)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn toy() -> SpikeRaster {
        // three neurons, window 2, n = 4
        SpikeRaster::new(
            2,
            4,
            vec![
                vec![0, 0, 0, 1, 0, 0, 1],
                vec![1, 0, 1, 1, 0, 1, 0],
                vec![0, 1, 0, 0, 1, 1, 0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_theta_gives_phi_zero() {
        let r = toy();
        let m = NeuroModel::new(0, vec![0, 1], 2, Variant::Hawkes, RateFunction::Sigmoid, 0.05).unwrap();
        let p = m.spike_probs(&[0.0; 4], &r).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        let lin = NeuroModel::new(0, vec![0], 1, Variant::Gl, RateFunction::Linear { mu: 0.3 }, 0.05).unwrap();
        assert_eq!(lin.spike_probs(&[0.0], &r).unwrap(), vec![0.3; 4]);
    }

    #[test]
    fn gl_truncates_after_own_spike() {
        let r = toy();
        let theta = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let gl = NeuroModel::new(0, vec![0, 1, 2], 2, Variant::Gl, RateFunction::Sigmoid, 0.01).unwrap();
        let hk = NeuroModel::new(0, vec![0, 1, 2], 2, Variant::Hawkes, RateFunction::Sigmoid, 0.01).unwrap();
        // neuron 0 spikes at t = 1, so at t = 2 only lag 1 counts
        let p2 = spike_prob(&gl, &theta, &r, 2).unwrap();
        let eta = theta[0] * 1.0 + theta[2] * 1.0 + theta[4] * 0.0;
        assert!((p2 - RateFunction::Sigmoid.eval(eta)).abs() < 1e-15);
        // at t = 1 no own spike in the window, truncation inactive
        assert_eq!(spike_prob(&gl, &theta, &r, 1).unwrap(), spike_prob(&hk, &theta, &r, 1).unwrap());
    }

    #[test]
    fn insufficient_history_is_reported() {
        let r = toy();
        let m = NeuroModel::new(0, vec![0], 3, Variant::Hawkes, RateFunction::Sigmoid, 0.05).unwrap();
        assert!(matches!(
            m.spike_probs(&[0.0; 3], &r),
            Err(Error::InsufficientHistory { lag: 3, .. })
        ));
    }

    #[test]
    fn projection_lands_on_the_boundary() {
        let m = NeuroModel::new(0, vec![0, 1], 2, Variant::Hawkes, RateFunction::Sigmoid, 0.1).unwrap();
        let (floor, ceiling) = m.signed_bounds();
        let p = m.project(&[3.0, 2.0, -4.0, 0.5]);
        let (neg, pos) = crate::model::signed_parts(&p);
        assert!((pos - ceiling).abs() < 1e-9);
        assert!((neg - floor).abs() < 1e-9);
        assert!(m.theta_space().contains(&p));
        let inside = [0.1, -0.2, 0.3, 0.0];
        assert_eq!(m.project(&inside), inside.to_vec());
    }

    #[test]
    fn raster_csv_round_trip_is_exact() {
        let r = toy();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = SpikeRaster::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(String::from_utf8(buf).unwrap().starts_with("neuron,-2,-1,0,1,2,3,4\n"));
    }

    #[test]
    fn rates_outside_the_range_are_rejected() {
        let params = NetworkParams {
            lag: 1,
            phi: RateFunction::Linear { mu: 0.2 },
            epsilon: 0.05,
            weights: vec![vec![-0.3]],
        };
        assert!(matches!(
            simulate_network(&params, Variant::Hawkes, 10, 1, &mut seeded(1)),
            Err(Error::RateOutOfRange { .. })
        ));
    }
}
