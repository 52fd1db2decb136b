//! Exp3 learning trajectories: the single learning-rate family and the
//! partition family with per-cell loss parameters.
//!
//! Both run exponential weights on cumulative importance-weighted losses;
//! the importance weights use the candidate's own probability path, so every
//! conditional law is a deterministic function of the parameter and the past
//! actions.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssumptionConstants, Family, Law, NormId, ThetaSpace, Trajectory};
use crate::optim::{grid_golden_max, projected_newton_box};

/// `floor((1/cells - eps) sqrt(T) / R)`.
pub fn t_epsilon(cells: usize, horizon_scale: f64, epsilon: f64, r_max: f64) -> usize {
    let v = (1.0 / cells as f64 - epsilon) * horizon_scale.sqrt() / r_max;
    if v.is_finite() && v > 0.0 {
        v.floor() as usize
    } else {
        0
    }
}

/// Sup-norm log-Lipschitz constant of the Exp3 conditional laws in the
/// parameter over `n` steps, valid while all probabilities stay above `eps`.
///
/// The derivative `Delta_t` of the cumulative weighted losses obeys
/// `Delta_{t+1} <= (1 + 2R/(sqrt(T) eps)) Delta_t + 1/(sqrt(T) eps)`, and
/// `|d log p| <= 2 Delta`.
pub fn exp3_lipschitz(n: usize, horizon_scale: f64, epsilon: f64, r_max: f64) -> f64 {
    let a = 2.0 * r_max / (horizon_scale.sqrt() * epsilon);
    (a * n as f64).exp_m1() / r_max
}

/// [`exp3_lipschitz`] raised to `1 / R` so that `L M >= 1` with `M = R`.
fn declared_lipschitz(n: usize, horizon_scale: f64, epsilon: f64, r_max: f64) -> f64 {
    exp3_lipschitz(n, horizon_scale, epsilon, r_max).max(1.0 / r_max)
}

/// Observed learner behaviour: actions `X_t` in `0..arms` and realized losses.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrajectory {
    pub arms: usize,
    pub actions: Vec<usize>,
    pub losses: Vec<f64>,
}

impl BanditTrajectory {
    pub fn new(arms: usize, actions: Vec<usize>, losses: Vec<f64>) -> Result<Self> {
        if actions.len() != losses.len() {
            return Err(Error::InconsistentHistory("actions and losses differ in length".into()));
        }
        if let Some(a) = actions.iter().find(|&&a| a >= arms) {
            return Err(Error::InconsistentHistory(format!("action {a} outside 0..{arms}")));
        }
        if let Some(l) = losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(Error::InconsistentHistory(format!("loss {l}")));
        }
        Ok(Self {
            arms,
            actions,
            losses,
        })
    }

    /// CSV with columns `t, action, cell, loss` and, when given, one column
    /// per arm with the true probabilities.
    pub fn write_csv<W: Write>(
        &self,
        w: W,
        partition: Option<&Partition>,
        truth: Option<&[Vec<f64>]>,
    ) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "action".into(), "cell".into(), "loss".into()];
        if truth.is_some() {
            header.extend((0..self.arms).map(|k| format!("p{k}")));
        }
        out.write_record(&header)?;
        for (t, (&a, &l)) in self.actions.iter().zip(&self.losses).enumerate() {
            let cell = partition.map_or(a, |p| p.cell_of(a));
            let mut rec = vec![(t + 1).to_string(), a.to_string(), cell.to_string(), format!("{l:?}")];
            if let Some(rows) = truth {
                rec.extend(rows[t].iter().map(|p| format!("{p:?}")));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl Trajectory for BanditTrajectory {
    fn horizon(&self) -> usize {
        self.actions.len()
    }
}

fn log_softmax_neg(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::INFINITY, f64::min);
    let lse = s.iter().map(|v| (m - v).exp()).sum::<f64>().ln();
    s.iter().map(|v| m - v - lse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Config {
    pub arms: usize,
    pub horizon_scale: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub losses: Vec<f64>,
    pub epsilon: f64,
}

impl Exp3Config {
    pub fn validate(&self) -> Result<()> {
        if self.arms < 2 || self.losses.len() != self.arms {
            return Err(Error::InvalidModel(format!(
                "{} arms with {} losses",
                self.arms,
                self.losses.len()
            )));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(Error::InvalidModel(format!("[r, R] = [{}, {}]", self.r_min, self.r_max)));
        }
        if self.losses.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::InvalidModel("losses must lie in [0, 1]".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / self.arms as f64) {
            return Err(Error::InvalidModel(format!("epsilon = {}", self.epsilon)));
        }
        if self.t_epsilon() < 2 {
            return Err(Error::InvalidModel(format!("T_eps = {} < 2", self.t_epsilon())));
        }
        Ok(())
    }

    pub fn t_epsilon(&self) -> usize {
        t_epsilon(self.arms, self.horizon_scale, self.epsilon, self.r_max)
    }

    pub fn eta(&self, theta: f64) -> f64 {
        theta / self.horizon_scale.sqrt()
    }
}

/// Log-probability rows `log p_t` for `t = 1..=steps`; `history` supplies
/// `(X_s, loss_s)` for `s < steps`.
fn exp3_log_path(arms: usize, eta: f64, history: &[(usize, f64)], steps: usize) -> Vec<Vec<f64>> {
    let mut cum = vec![0.0; arms];
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let s: Vec<f64> = cum.iter().map(|c| eta * c).collect();
        let lp = log_softmax_neg(&s);
        if let Some(&(a, g)) = history.get(t) {
            cum[a] += g / lp[a].exp();
        }
        out.push(lp);
    }
    out
}

/// `p_{theta/sqrt(T), t}` for `t = history.len() + 1`.
pub fn exp3_cond_prob(config: &Exp3Config, theta: f64, history: &[(usize, f64)]) -> Result<Vec<f64>> {
    for &(a, g) in history {
        if a >= config.arms || !(g.is_finite() && g >= 0.0) {
            return Err(Error::InconsistentHistory(format!("entry ({a}, {g})")));
        }
    }
    let path = exp3_log_path(config.arms, config.eta(theta), history, history.len() + 1);
    Ok(path[history.len()].iter().map(|v| v.exp()).collect())
}

/// Run the learner with `eta = theta / sqrt(T)` for `T_eps` steps; returns
/// the trajectory and its probability path.
pub fn simulate_exp3<R: Rng + ?Sized>(
    config: &Exp3Config,
    theta: f64,
    rng: &mut R,
) -> Result<(BanditTrajectory, Vec<Vec<f64>>)> {
    config.validate()?;
    if !(config.r_min..=config.r_max).contains(&theta) {
        return Err(Error::ParameterOutsideModel(format!("theta = {theta}")));
    }
    let eta = config.eta(theta);
    let n = config.t_epsilon();
    let mut cum = vec![0.0; config.arms];
    let (mut actions, mut losses, mut probs) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let s: Vec<f64> = cum.iter().map(|c| eta * c).collect();
        let p: Vec<f64> = log_softmax_neg(&s).iter().map(|v| v.exp()).collect();
        let a = draw(&p, rng);
        let g = config.losses[a];
        cum[a] += g / p[a];
        actions.push(a);
        losses.push(g);
        probs.push(p);
    }
    Ok((BanditTrajectory::new(config.arms, actions, losses)?, probs))
}

fn draw<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Single learning-rate family `theta in [r, R]`.
#[derive(Debug, Clone)]
pub struct Exp3Model {
    config: Exp3Config,
    constants: AssumptionConstants,
    space: ThetaSpace,
}

impl Exp3Model {
    pub fn new(config: Exp3Config) -> Result<Self> {
        config.validate()?;
        let n = config.t_epsilon();
        let lipschitz = declared_lipschitz(n, config.horizon_scale, config.epsilon, config.r_max);
        let constants =
            AssumptionConstants::bounded(config.epsilon, lipschitz, config.r_max, NormId::Sup)?;
        let space = ThetaSpace::boxed(vec![config.r_min], vec![config.r_max]);
        Ok(Self {
            config,
            constants,
            space,
        })
    }

    pub fn config(&self) -> &Exp3Config {
        &self.config
    }

    fn history(data: &BanditTrajectory) -> Vec<(usize, f64)> {
        data.actions.iter().copied().zip(data.losses.iter().copied()).collect()
    }

    fn log_path(&self, theta: &[f64], data: &BanditTrajectory) -> Result<Vec<Vec<f64>>> {
        self.space.check(theta)?;
        if data.arms != self.config.arms {
            return Err(Error::InconsistentHistory(format!(
                "{} arms, model has {}",
                data.arms, self.config.arms
            )));
        }
        let h = Self::history(data);
        Ok(exp3_log_path(self.config.arms, self.config.eta(theta[0]), &h, h.len()))
    }
}

impl Family for Exp3Model {
    type Data = BanditTrajectory;

    fn name(&self) -> String {
        format!("exp3-K{}", self.config.arms)
    }

    fn dim(&self) -> usize {
        1
    }

    fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    fn theta_space(&self) -> &ThetaSpace {
        &self.space
    }

    fn laws(&self, theta: &[f64], data: &BanditTrajectory) -> Result<Vec<Law>> {
        Ok(self.log_path(theta, data)?.into_iter().map(Law::discrete).collect())
    }

    fn observed_log_densities(&self, theta: &[f64], data: &BanditTrajectory) -> Result<Vec<f64>> {
        let path = self.log_path(theta, data)?;
        Ok(path.iter().zip(&data.actions).map(|(lp, &a)| lp[a]).collect())
    }
}

pub const LEARNING_RATE_GRID: usize = 10_001;

/// Grid scan plus golden-section refinement of the learning-rate likelihood.
pub fn mle_learning_rate(model: &Exp3Model, data: &BanditTrajectory) -> Result<(f64, f64)> {
    mle_learning_rate_on_grid(model, data, LEARNING_RATE_GRID)
}

pub fn mle_learning_rate_on_grid(model: &Exp3Model, data: &BanditTrajectory, grid: usize) -> Result<(f64, f64)> {
    let c = &model.config;
    if c.r_min == c.r_max {
        let ll = crate::model::partial_log_likelihood(model, &[c.r_min], data)?;
        return Ok((c.r_min, ll));
    }
    let h = Exp3Model::history(data);
    let objective = |theta: f64| -> f64 {
        exp3_log_path(c.arms, c.eta(theta), &h, h.len())
            .iter()
            .zip(&data.actions)
            .map(|(lp, &a)| lp[a])
            .sum()
    };
    Ok(grid_golden_max(objective, c.r_min, c.r_max, grid, 1e-12))
}

/// A partition of `0..arms` into cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl Partition {
    pub fn new(cells: Vec<Vec<usize>>) -> Result<Self> {
        let arms: usize = cells.iter().map(Vec::len).sum();
        let mut cell_of = vec![usize::MAX; arms];
        for (j, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidModel("empty cell".into()));
            }
            for &a in cell {
                if a >= arms || cell_of[a] != usize::MAX {
                    return Err(Error::InvalidModel(format!("action {a} repeated or out of range")));
                }
                cell_of[a] = j;
            }
        }
        Ok(Self { cells, cell_of })
    }

    /// `cells` contiguous blocks of equal size.
    pub fn blocks(arms: usize, cells: usize) -> Result<Self> {
        if cells == 0 || arms % cells != 0 {
            return Err(Error::InvalidModel(format!("{arms} arms into {cells} blocks")));
        }
        let size = arms / cells;
        Self::new((0..cells).map(|j| (j * size..(j + 1) * size).collect()).collect())
    }

    pub fn arms(&self) -> usize {
        self.cell_of.len()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, action: usize) -> usize {
        self.cell_of[action]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell_size(&self, j: usize) -> usize {
        self.cells[j].len()
    }
}

/// Partition family: cell `J` has loss `theta_J / sqrt(T)`, the learner
/// picks a cell by exponential weights and an action uniformly inside it.
#[derive(Debug, Clone)]
pub struct PartitionModel {
    partition: Partition,
    horizon_scale: f64,
    r_min: f64,
    r_max: f64,
    constants: AssumptionConstants,
    space: ThetaSpace,
}

impl PartitionModel {
    /// `steps` is the trajectory length the constants are declared for and
    /// `epsilon` the cell-probability floor; the declared density floor on
    /// actions is `epsilon / arms`.
    pub fn new(
        partition: Partition,
        horizon_scale: f64,
        r_min: f64,
        r_max: f64,
        epsilon: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(r_min > 0.0 && r_min <= r_max && r_max.is_finite() && horizon_scale > 0.0) {
            return Err(Error::InvalidModel(format!("[r, R] = [{r_min}, {r_max}], T = {horizon_scale}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidModel(format!("epsilon = {epsilon}")));
        }
        let d = partition.len();
        let floor = epsilon / partition.arms() as f64;
        let lipschitz = declared_lipschitz(steps, horizon_scale, epsilon, r_max);
        let constants = AssumptionConstants::bounded(floor, lipschitz, r_max, NormId::Sup)?;
        let space = ThetaSpace::boxed(vec![r_min; d], vec![r_max; d]);
        Ok(Self {
            partition,
            horizon_scale,
            r_min,
            r_max,
            constants,
            space,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn horizon_scale(&self) -> f64 {
        self.horizon_scale
    }

    fn check_data(&self, data: &BanditTrajectory) -> Result<()> {
        if data.arms != self.partition.arms() {
            return Err(Error::InconsistentHistory(format!(
                "{} arms, partition covers {}",
                data.arms,
                self.partition.arms()
            )));
        }
        Ok(())
    }

    /// Log cell-probability rows `log p_t(J)` for `t = 1..n`.
    pub fn cell_log_path(&self, theta: &[f64], data: &BanditTrajectory) -> Result<Vec<Vec<f64>>> {
        self.space.check(theta)?;
        self.check_data(data)?;
        let sqrt_t = self.horizon_scale.sqrt();
        let mut cum = vec![0.0; self.partition.len()];
        let mut out = Vec::with_capacity(data.horizon());
        for &a in &data.actions {
            let lp = log_softmax_neg(&cum);
            let j = self.partition.cell_of(a);
            cum[j] += theta[j] / (sqrt_t * lp[j].exp());
            out.push(lp);
        }
        Ok(out)
    }

    fn action_log_law(&self, cell_lp: &[f64]) -> Vec<f64> {
        (0..self.partition.arms())
            .map(|a| {
                let j = self.partition.cell_of(a);
                cell_lp[j] - (self.partition.cell_size(j) as f64).ln()
            })
            .collect()
    }

    /// `sum_t sum_J w_t(J) log p_t(J)` and its gradient, by forward-mode
    /// differentiation through the recursion.
    pub fn weighted_objective(
        &self,
        theta: &[f64],
        data: &BanditTrajectory,
        weights: &[Vec<f64>],
    ) -> (f64, Vec<f64>) {
        let d = self.partition.len();
        let sqrt_t = self.horizon_scale.sqrt();
        let mut cum = vec![0.0; d];
        // dcum[J * d + i] = d cum_J / d theta_i
        let mut dcum = vec![0.0; d * d];
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut dlp = vec![0.0; d * d];
        for (t, &a) in data.actions.iter().enumerate() {
            let lp = log_softmax_neg(&cum);
            if lp.iter().any(|v| !v.is_finite()) {
                return (f64::NEG_INFINITY, grad);
            }
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            for i in 0..d {
                let mean: f64 = (0..d).map(|k| p[k] * dcum[k * d + i]).sum();
                for j in 0..d {
                    dlp[j * d + i] = -dcum[j * d + i] + mean;
                }
            }
            for (j, &w) in weights[t].iter().enumerate() {
                if w != 0.0 {
                    value += w * lp[j];
                    for i in 0..d {
                        grad[i] += w * dlp[j * d + i];
                    }
                }
            }
            let j = self.partition.cell_of(a);
            let inc = theta[j] / (sqrt_t * p[j]);
            cum[j] += inc;
            for i in 0..d {
                let direct = if i == j { 1.0 / (sqrt_t * p[j]) } else { 0.0 };
                dcum[j * d + i] += direct - inc * dlp[j * d + i];
            }
        }
        (value, grad)
    }

    /// Indicator weights of the observed cells.
    pub fn observed_weights(&self, data: &BanditTrajectory) -> Vec<Vec<f64>> {
        data.actions
            .iter()
            .map(|&a| {
                let mut w = vec![0.0; self.partition.len()];
                w[self.partition.cell_of(a)] = 1.0;
                w
            })
            .collect()
    }

    /// Cell weights from action-level probability rows.
    pub fn cell_weights(&self, action_probs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        action_probs
            .iter()
            .map(|row| {
                let mut w = vec![0.0; self.partition.len()];
                for (a, p) in row.iter().enumerate() {
                    w[self.partition.cell_of(a)] += p;
                }
                w
            })
            .collect()
    }

    /// `-sum_t log |J(X_t)|`, the parameter-free within-cell term.
    pub fn within_cell_term(&self, data: &BanditTrajectory) -> f64 {
        -data
            .actions
            .iter()
            .map(|&a| (self.partition.cell_size(self.partition.cell_of(a)) as f64).ln())
            .sum::<f64>()
    }
}

impl Family for PartitionModel {
    type Data = BanditTrajectory;

    fn name(&self) -> String {
        format!("exp3-cells{}", self.partition.len())
    }

    fn dim(&self) -> usize {
        self.partition.len()
    }

    fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    fn theta_space(&self) -> &ThetaSpace {
        &self.space
    }

    fn laws(&self, theta: &[f64], data: &BanditTrajectory) -> Result<Vec<Law>> {
        Ok(self
            .cell_log_path(theta, data)?
            .iter()
            .map(|lp| Law::discrete(self.action_log_law(lp)))
            .collect())
    }

    fn observed_log_densities(&self, theta: &[f64], data: &BanditTrajectory) -> Result<Vec<f64>> {
        let path = self.cell_log_path(theta, data)?;
        Ok(path
            .iter()
            .zip(&data.actions)
            .map(|(lp, &a)| {
                let j = self.partition.cell_of(a);
                lp[j] - (self.partition.cell_size(j) as f64).ln()
            })
            .collect())
    }
}

/// Simulate `steps` choices of the partition learner; also returns the
/// action-level probability rows. Recorded losses are the cell losses
/// `theta_J / sqrt(T)`.
pub fn simulate_partition_learner<R: Rng + ?Sized>(
    model: &PartitionModel,
    theta: &[f64],
    steps: usize,
    rng: &mut R,
) -> Result<(BanditTrajectory, Vec<Vec<f64>>)> {
    model.space.check(theta)?;
    let part = &model.partition;
    let sqrt_t = model.horizon_scale.sqrt();
    let mut cum = vec![0.0; part.len()];
    let (mut actions, mut losses, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..steps {
        let lp = log_softmax_neg(&cum);
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let j = draw(&p, rng);
        let cell = &part.cells()[j];
        let a = cell[rng.random_range(0..cell.len())];
        cum[j] += theta[j] / (sqrt_t * p[j]);
        actions.push(a);
        losses.push(theta[j] / sqrt_t);
        rows.push(model.action_log_law(&lp).iter().map(|v| v.exp()).collect());
    }
    Ok((BanditTrajectory::new(part.arms(), actions, losses)?, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFit {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    /// One cell: the likelihood does not depend on the parameter.
    pub degenerate: bool,
}

fn maximize_weighted(model: &PartitionModel, data: &BanditTrajectory, weights: &[Vec<f64>]) -> Vec<f64> {
    let d = model.partition.len();
    let (lo, hi) = (vec![model.r_min; d], vec![model.r_max; d]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    // several starts guard against flat regions of the non-concave objective
    for start in [0.5, 0.1, 0.9] {
        let x0 = vec![model.r_min + start * (model.r_max - model.r_min); d];
        let (x, fx) = projected_newton_box(|t| model.weighted_objective(t, data, weights), &lo, &hi, x0, 100);
        if best.as_ref().is_none_or(|(_, fb)| fx > *fb) {
            best = Some((x, fx));
        }
    }
    best.map(|(x, _)| x).unwrap_or(lo)
}

/// Maximum-likelihood cell parameters by projected gradient ascent on
/// `[r, R]^D`.
pub fn mle_partition(model: &PartitionModel, data: &BanditTrajectory) -> Result<PartitionFit> {
    model.check_data(data)?;
    if data.actions.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let d = model.partition.len();
    let theta = if d == 1 {
        vec![model.r_min]
    } else {
        maximize_weighted(model, data, &model.observed_weights(data))
    };
    let log_likelihood = crate::model::partial_log_likelihood(model, &theta, data)?;
    Ok(PartitionFit {
        theta,
        log_likelihood,
        degenerate: d == 1,
    })
}

/// Minimizer of `K_n` over the partition model given the true action-level
/// probability rows.
pub fn min_loss_partition(model: &PartitionModel, data: &BanditTrajectory, truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.check_data(data)?;
    if model.partition.len() == 1 {
        return Ok(vec![model.r_min]);
    }
    Ok(maximize_weighted(model, data, &model.cell_weights(truth)))
}
