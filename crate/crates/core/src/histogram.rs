//! Piecewise-constant densities on `[0, 1]` with equal-length bins, fitted by
//! box-constrained maximum likelihood.

use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::box_simplex_mle;
use crate::model::{
    AssumptionConstants, Constraint, Family, Law, NormId, Oracle, ThetaSpace, Trajectory,
};

/// Real-valued i.i.d. observations in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IidSample {
    pub observations: Vec<f64>,
}

impl Trajectory for IidSample {
    fn horizon(&self) -> usize {
        self.observations.len()
    }
}

/// Bin of `x` among `bins` equal bins; boundary points go to the left bin,
/// except `0` which goes to the first.
pub fn bin_index(x: f64, bins: usize) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let k = (x * bins as f64).ceil() as usize;
    k.saturating_sub(1).min(bins - 1)
}

pub fn bin_counts(sample: &IidSample, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &x in &sample.observations {
        counts[bin_index(x, bins)] += 1.0;
    }
    counts
}

/// A strictly positive piecewise-constant density with equal bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDensity {
    heights: Vec<f64>,
}

impl HistogramDensity {
    pub fn new(heights: Vec<f64>) -> Result<Self> {
        if heights.is_empty() || heights.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidDensity("heights must be strictly positive".into()));
        }
        let mass: f64 = heights.iter().sum::<f64>() / heights.len() as f64;
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensity(format!("integrates to {mass}")));
        }
        Ok(Self { heights })
    }

    pub fn uniform() -> Self {
        Self { heights: vec![1.0] }
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    pub fn law(&self) -> Law {
        let d = self.heights.len();
        Law {
            mass: vec![1.0 / d as f64; d],
            log_density: self.heights.iter().map(|h| h.ln()).collect(),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.heights[bin_index(x, self.heights.len())].ln()
    }

    /// Probability of each of `bins` equal bins (exact for any `bins`).
    pub fn bin_masses(&self, bins: usize) -> Vec<f64> {
        let d = self.heights.len();
        let cdf = |x: f64| -> f64 {
            let pos = x * d as f64;
            let k = (pos.floor() as usize).min(d);
            let full: f64 = self.heights[..k].iter().sum::<f64>() / d as f64;
            let part = if k < d {
                self.heights[k] * (pos - k as f64) / d as f64
            } else {
                0.0
            };
            full + part
        };
        (0..bins)
            .map(|i| cdf((i + 1) as f64 / bins as f64) - cdf(i as f64 / bins as f64))
            .collect()
    }

    /// Inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let d = self.heights.len() as f64;
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (i, h) in self.heights.iter().enumerate() {
            let m = h / d;
            if u < cum + m || i + 1 == self.heights.len() {
                let within = ((u - cum) / m).clamp(0.0, 1.0);
                return ((i as f64 + within) / d).clamp(0.0, 1.0);
            }
            cum += m;
        }
        1.0
    }
}

impl Oracle<IidSample> for HistogramDensity {
    fn laws(&self, data: &IidSample) -> Result<Vec<Law>> {
        Ok(vec![self.law(); data.horizon()])
    }

    fn observed_log_densities(&self, data: &IidSample) -> Result<Vec<f64>> {
        Ok(data.observations.iter().map(|&x| self.log_density(x)).collect())
    }
}

/// `n` i.i.d. draws from `density`.
pub fn sample_iid<R: Rng + ?Sized>(density: &HistogramDensity, n: usize, rng: &mut R) -> IidSample {
    IidSample {
        observations: (0..n).map(|_| density.draw(rng)).collect(),
    }
}

/// Histogram model with `bins` equal bins and heights in `[eps, 1/eps]`
/// averaging to one.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramModel {
    bins: usize,
    epsilon: f64,
    constants: AssumptionConstants,
    space: ThetaSpace,
}

impl HistogramModel {
    pub fn new(bins: usize, epsilon: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidModel("histogram needs at least one bin".into()));
        }
        // log-density route: |log a - log b| <= |a - b| / eps on [eps, 1/eps]
        let constants =
            AssumptionConstants::bounded(epsilon, 1.0 / epsilon, 1.0 / epsilon - epsilon, NormId::Sup)?;
        let space = ThetaSpace::boxed(vec![epsilon; bins], vec![1.0 / epsilon; bins]).with(
            Constraint::LinearSum {
                indices: (0..bins).collect(),
                scale: 1.0 / bins as f64,
                target: 1.0,
            },
        );
        Ok(Self {
            bins,
            epsilon,
            constants,
            space,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn law(&self, theta: &[f64]) -> Law {
        Law {
            mass: vec![1.0 / self.bins as f64; self.bins],
            log_density: theta.iter().map(|v| v.ln()).collect(),
        }
    }

    /// Parameter of this model equal to `density`, when representable.
    pub fn embed(&self, density: &HistogramDensity) -> Option<Vec<f64>> {
        let d = density.bins();
        if self.bins % d != 0 {
            return None;
        }
        let k = self.bins / d;
        let theta: Vec<f64> = (0..self.bins).map(|i| density.heights()[i / k]).collect();
        self.space.contains(&theta).then_some(theta)
    }
}

impl Family for HistogramModel {
    type Data = IidSample;

    fn name(&self) -> String {
        format!("hist-D{}", self.bins)
    }

    fn dim(&self) -> usize {
        self.bins
    }

    fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    fn theta_space(&self) -> &ThetaSpace {
        &self.space
    }

    fn laws(&self, theta: &[f64], data: &IidSample) -> Result<Vec<Law>> {
        self.space.check(theta)?;
        Ok(vec![self.law(theta); data.horizon()])
    }

    fn observed_log_densities(&self, theta: &[f64], data: &IidSample) -> Result<Vec<f64>> {
        self.space.check(theta)?;
        let logs: Vec<f64> = theta.iter().map(|v| v.ln()).collect();
        Ok(data
            .observations
            .iter()
            .map(|&x| logs[bin_index(x, self.bins)])
            .collect())
    }
}

/// Maximize `sum_I w_I log theta_I` over `eps <= theta_I <= 1/eps`,
/// `mean(theta) = 1`, for nonnegative weights with positive total.
pub fn waterfill(weights: &[f64], epsilon: f64) -> Vec<f64> {
    box_simplex_mle(weights, epsilon, 1.0 / epsilon, weights.len() as f64)
}

/// Constrained MLE of the histogram heights.
pub fn mle_histogram(model: &HistogramModel, sample: &IidSample) -> Result<Vec<f64>> {
    if sample.observations.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if let Some(x) = sample.observations.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidTrajectory(format!("observation {x} outside [0, 1]")));
    }
    Ok(waterfill(&bin_counts(sample, model.bins), model.epsilon))
}

/// Minimizer of `K_n` over the model: the water-filling solution with the
/// true bin masses as weights.
pub fn min_loss_histogram(model: &HistogramModel, truth: &HistogramDensity) -> Vec<f64> {
    waterfill(&truth.bin_masses(model.bins), model.epsilon)
}
