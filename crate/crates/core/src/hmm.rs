//! Finite-state hidden Markov models on a finite alphabet.
//!
//! Parameter layout: `[pi (h), Q (h x h, row-major), nu (h x |X|, row-major)]`
//! with `H_0 ~ pi`, `H_t ~ Q(H_{t-1}, .)` and `X_t ~ nu(H_t, .)` for `t >= 1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    AssumptionConstants, Constraint, Family, Law, NormId, Regime, ThetaSpace, Trajectory,
};
use crate::optim::{box_simplex_mle, repair_row};

/// Observed symbols `X_1..X_n` in `0..alphabet`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSample {
    pub observations: Vec<usize>,
    pub alphabet: usize,
}

impl HmmSample {
    pub fn new(observations: Vec<usize>, alphabet: usize) -> Result<Self> {
        if let Some(x) = observations.iter().find(|&&x| x >= alphabet) {
            return Err(Error::InvalidTrajectory(format!(
                "symbol {x} outside alphabet of size {alphabet}"
            )));
        }
        Ok(Self {
            observations,
            alphabet,
        })
    }
}

impl Trajectory for HmmSample {
    fn horizon(&self) -> usize {
        self.observations.len()
    }
}

#[derive(Debug, Clone)]
pub struct HmmModel {
    states: usize,
    alphabet: usize,
    c_q: f64,
    alpha: f64,
    n: usize,
    lo_q: f64,
    hi_q: f64,
    lo_e: f64,
    constants: AssumptionConstants,
    space: ThetaSpace,
}

impl HmmModel {
    /// Boxes: initial and transition entries in
    /// `[1/(C_Q log n h), min(1, C_Q log n / h)]`, emissions in `[n^-alpha, 1]`.
    pub fn new(states: usize, alphabet: usize, c_q: f64, alpha: f64, n: usize) -> Result<Self> {
        if states == 0 || alphabet < 2 || n < 2 {
            return Err(Error::InvalidModel(format!(
                "h = {states}, |X| = {alphabet}, n = {n}"
            )));
        }
        if !(c_q > 0.0 && alpha > 0.0) {
            return Err(Error::InvalidModel(format!("C_Q = {c_q}, alpha = {alpha}")));
        }
        let spread = c_q * (n as f64).ln();
        if spread < 1.0 {
            return Err(Error::NoFeasibleInit(format!("C_Q log n = {spread} < 1")));
        }
        let h = states as f64;
        let lo_q = 1.0 / (spread * h);
        let hi_q = (spread / h).min(1.0);
        let lo_e = (n as f64).powf(-alpha);
        if alphabet as f64 * lo_e > 1.0 {
            return Err(Error::NoFeasibleInit(format!(
                "|X| n^-alpha = {} > 1",
                alphabet as f64 * lo_e
            )));
        }
        let mut lower = vec![lo_q; states + states * states];
        let mut upper = vec![hi_q; states + states * states];
        lower.extend(std::iter::repeat_n(lo_e, states * alphabet));
        upper.extend(std::iter::repeat_n(1.0, states * alphabet));
        let mut space = ThetaSpace::boxed(lower, upper).with(Constraint::LinearSum {
            indices: (0..states).collect(),
            scale: 1.0,
            target: 1.0,
        });
        for i in 0..states {
            let start = states + i * states;
            space = space.with(Constraint::LinearSum {
                indices: (start..start + states).collect(),
                scale: 1.0,
                target: 1.0,
            });
        }
        for i in 0..states {
            let start = states + states * states + i * alphabet;
            space = space.with(Constraint::LinearSum {
                indices: (start..start + alphabet).collect(),
                scale: 1.0,
                target: 1.0,
            });
        }
        let diameter = (hi_q - lo_q).max(1.0 - lo_e);
        // per-step bound on the log-predictive derivative: inverse floors
        let lipschitz = (1.0 / lo_e + 1.0 / lo_q).max(1.0 / diameter);
        let constants = AssumptionConstants::bounded(lo_e, lipschitz, diameter, NormId::Sup)?;
        Ok(Self {
            states,
            alphabet,
            c_q,
            alpha,
            n,
            lo_q,
            hi_q,
            lo_e,
            constants,
            space,
        })
    }

    /// Replace the declared log-Lipschitz constant (e.g. by an empirical one).
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        let c = &self.constants;
        self.constants = match c.regime {
            Regime::Bounded => {
                AssumptionConstants::bounded(self.lo_e, lipschitz, c.diameter, c.norm)?
            }
            Regime::Unbounded => AssumptionConstants::unbounded(
                c.tail_scale.unwrap_or(1.0),
                lipschitz,
                c.diameter,
                c.norm,
            )?,
        };
        Ok(self)
    }

    /// Declare the model under the unbounded-regime assumptions with tail
    /// scale `2 max(log(C_Q log n), alpha log n, 1)`.
    pub fn into_unbounded(mut self) -> Result<Self> {
        let c = &self.constants;
        self.constants =
            AssumptionConstants::unbounded(self.tail_scale(), c.lipschitz, c.diameter, c.norm)?;
        Ok(self)
    }

    pub fn tail_scale(&self) -> f64 {
        let ln_n = (self.n as f64).ln();
        2.0 * (self.c_q * ln_n).ln().max(self.alpha * ln_n).max(1.0)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn transition_bounds(&self) -> (f64, f64) {
        (self.lo_q, self.hi_q)
    }

    pub fn emission_floor(&self) -> f64 {
        self.lo_e
    }

    pub fn param_len(&self) -> usize {
        self.states * (1 + self.states + self.alphabet)
    }

    /// `(pi, Q, nu)` views of a parameter vector.
    pub fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let h = self.states;
        let (pi, rest) = theta.split_at(h);
        let (q, nu) = rest.split_at(h * h);
        (pi, q, nu)
    }

    pub fn assemble(&self, pi: &[f64], q: &[f64], nu: &[f64]) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_len());
        theta.extend_from_slice(pi);
        theta.extend_from_slice(q);
        theta.extend_from_slice(nu);
        theta
    }

    /// Average emission `(1/h) sum_i nu_i(x)`.
    pub fn mean_emission(&self, theta: &[f64], x: usize) -> f64 {
        let (_, _, nu) = self.split(theta);
        (0..self.states).map(|i| nu[i * self.alphabet + x]).sum::<f64>() / self.states as f64
    }

    fn check_data(&self, data: &HmmSample) -> Result<()> {
        if data.alphabet != self.alphabet {
            return Err(Error::InvalidTrajectory(format!(
                "alphabet {} != model alphabet {}",
                data.alphabet, self.alphabet
            )));
        }
        Ok(())
    }

    /// Predicted hidden-state distributions `P(H_t = . | X_1^{t-1})` for
    /// `t = 1..n`, by the normalized forward recursion.
    pub fn state_predictions(&self, theta: &[f64], data: &HmmSample) -> Result<Vec<Vec<f64>>> {
        self.space.check(theta)?;
        self.check_data(data)?;
        let h = self.states;
        let (pi, q, nu) = self.split(theta);
        let mut filt = pi.to_vec();
        let mut out = Vec::with_capacity(data.horizon());
        for &x in &data.observations {
            let pred = propagate(&filt, q, h);
            let mut norm = 0.0;
            for j in 0..h {
                filt[j] = pred[j] * nu[j * self.alphabet + x];
                norm += filt[j];
            }
            for f in filt.iter_mut() {
                *f /= norm;
            }
            out.push(pred);
        }
        Ok(out)
    }

    /// Feasible random start: uniform draws in the boxes, then row repair.
    pub fn random_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let h = self.states;
        let mut draw_row = |len: usize, lo: f64, hi: f64| -> Vec<f64> {
            let raw: Vec<f64> = (0..len).map(|_| rng.random_range(lo..=hi)).collect();
            repair_row(&raw, lo, hi, 1.0)
        };
        let mut theta = draw_row(h, self.lo_q, self.hi_q);
        for _ in 0..h {
            theta.extend(draw_row(h, self.lo_q, self.hi_q));
        }
        for _ in 0..h {
            theta.extend(draw_row(self.alphabet, self.lo_e, 1.0));
        }
        theta
    }

    /// Embed a parameter of a model with fewer states by duplicating hidden
    /// states; `None` when the result leaves this model's boxes.
    pub fn embed(&self, source: &HmmModel, theta: &[f64]) -> Option<Vec<f64>> {
        if source.alphabet != self.alphabet || source.states > self.states {
            return None;
        }
        let (k, h) = (source.states, self.states);
        // target state j copies source state owner[j]
        let owner: Vec<usize> = (0..h).map(|j| if j < k { j } else { j % k }).collect();
        let copies: Vec<f64> = (0..k)
            .map(|i| owner.iter().filter(|&&o| o == i).count() as f64)
            .collect();
        let (pi, q, nu) = source.split(theta);
        let new_pi: Vec<f64> = owner.iter().map(|&o| pi[o] / copies[o]).collect();
        let mut new_q = Vec::with_capacity(h * h);
        for &a in &owner {
            for &b in &owner {
                new_q.push(q[a * k + b] / copies[b]);
            }
        }
        let mut new_nu = Vec::with_capacity(h * self.alphabet);
        for &a in &owner {
            new_nu.extend_from_slice(&nu[a * self.alphabet..(a + 1) * self.alphabet]);
        }
        let out = self.assemble(&new_pi, &new_q, &new_nu);
        self.space.contains(&out).then_some(out)
    }
}

fn propagate(filt: &[f64], q: &[f64], h: usize) -> Vec<f64> {
    let mut pred = vec![0.0; h];
    for (i, &f) in filt.iter().enumerate() {
        for j in 0..h {
            pred[j] += f * q[i * h + j];
        }
    }
    pred
}

impl Family for HmmModel {
    type Data = HmmSample;

    fn name(&self) -> String {
        format!("hmm-h{}", self.states)
    }

    fn dim(&self) -> usize {
        self.states * (self.alphabet - 1) + self.states * self.states - 1
    }

    fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    fn theta_space(&self) -> &ThetaSpace {
        &self.space
    }

    fn laws(&self, theta: &[f64], data: &HmmSample) -> Result<Vec<Law>> {
        let (_, _, nu) = self.split(theta);
        let preds = self.state_predictions(theta, data)?;
        Ok(preds
            .iter()
            .map(|pred| {
                let probs: Vec<f64> = (0..self.alphabet)
                    .map(|x| {
                        (0..self.states)
                            .map(|j| pred[j] * nu[j * self.alphabet + x])
                            .sum()
                    })
                    .collect();
                Law::from_probs(&probs)
            })
            .collect())
    }

    fn observed_log_densities(&self, theta: &[f64], data: &HmmSample) -> Result<Vec<f64>> {
        let (_, _, nu) = self.split(theta);
        let preds = self.state_predictions(theta, data)?;
        Ok(preds
            .iter()
            .zip(&data.observations)
            .map(|(pred, &x)| {
                (0..self.states)
                    .map(|j| pred[j] * nu[j * self.alphabet + x])
                    .sum::<f64>()
                    .ln()
            })
            .collect())
    }
}

/// Draw `n` observations; also returns the hidden path `H_1..H_n`.
pub fn sample_hmm<R: Rng + ?Sized>(
    model: &HmmModel,
    theta: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<(HmmSample, Vec<usize>)> {
    model.space.check(theta)?;
    let (h, k) = (model.states, model.alphabet);
    let (pi, q, nu) = model.split(theta);
    let mut state = draw_categorical(pi, rng);
    let mut obs = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    for _ in 0..n {
        state = draw_categorical(&q[state * h..(state + 1) * h], rng);
        hidden.push(state);
        obs.push(draw_categorical(&nu[state * k..(state + 1) * k], rng));
    }
    Ok((
        HmmSample {
            observations: obs,
            alphabet: k,
        },
        hidden,
    ))
}

fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iter: 500,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmRun {
    pub initial_log_likelihood: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub runs: Vec<EmRun>,
}

/// One EM step: returns the log-likelihood at `theta` and the maximizer of
/// the expected complete log-likelihood over the boxes.
fn em_step(model: &HmmModel, theta: &[f64], data: &HmmSample) -> (f64, Vec<f64>) {
    let (h, k) = (model.states, model.alphabet);
    let (pi, q, nu) = model.split(theta);
    let n = data.horizon();
    let obs = &data.observations;
    // scaled forward: alpha[t] = P(H_t | X_1^t), t = 0..n
    let mut alpha = vec![0.0; (n + 1) * h];
    let mut scale = vec![0.0; n + 1];
    alpha[..h].copy_from_slice(pi);
    scale[0] = 1.0;
    for t in 1..=n {
        let x = obs[t - 1];
        let (prev, cur) = alpha.split_at_mut(t * h);
        let prev = &prev[(t - 1) * h..];
        let mut norm = 0.0;
        for j in 0..h {
            let mut s = 0.0;
            for i in 0..h {
                s += prev[i] * q[i * h + j];
            }
            s *= nu[j * k + x];
            cur[j] = s;
            norm += s;
        }
        for v in &mut cur[..h] {
            *v /= norm;
        }
        scale[t] = norm;
    }
    let loglik: f64 = scale[1..].iter().map(|c| c.ln()).sum();
    // scaled backward with expected counts accumulated on the fly
    let mut beta = vec![1.0; h];
    let mut trans = vec![0.0; h * h];
    let mut emit = vec![0.0; h * k];
    let mut next = vec![0.0; h];
    for t in (1..=n).rev() {
        let x = obs[t - 1];
        let a_t = &alpha[t * h..(t + 1) * h];
        for j in 0..h {
            emit[j * k + x] += a_t[j] * beta[j];
        }
        let a_prev = &alpha[(t - 1) * h..t * h];
        let c = scale[t];
        for j in 0..h {
            next[j] = nu[j * k + x] * beta[j] / c;
        }
        for i in 0..h {
            let mut b = 0.0;
            for j in 0..h {
                let w = q[i * h + j] * next[j];
                trans[i * h + j] += a_prev[i] * w;
                b += w;
            }
            beta[i] = b;
        }
    }
    let first: Vec<f64> = (0..h).map(|i| alpha[i] * beta[i]).collect();
    let mut out = box_simplex_mle(&first, model.lo_q, model.hi_q, 1.0);
    for i in 0..h {
        out.extend(box_simplex_mle(&trans[i * h..(i + 1) * h], model.lo_q, model.hi_q, 1.0));
    }
    for j in 0..h {
        out.extend(box_simplex_mle(&emit[j * k..(j + 1) * k], model.lo_e, 1.0, 1.0));
    }
    (loglik, out)
}

fn em_run(model: &HmmModel, data: &HmmSample, start: Vec<f64>, opts: &EmOptions) -> EmRun {
    let mut theta = start;
    let (mut ll, mut next) = em_step(model, &theta, data);
    let initial = ll;
    let (mut best_theta, mut best_ll) = (theta.clone(), ll);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        theta = next;
        let (new_ll, new_next) = em_step(model, &theta, data);
        next = new_next;
        let improvement = new_ll - ll;
        ll = new_ll;
        if ll > best_ll {
            best_ll = ll;
            best_theta.clone_from(&theta);
        }
        if improvement.abs() < opts.tol * ll.abs().max(1.0) {
            break;
        }
    }
    EmRun {
        initial_log_likelihood: initial,
        log_likelihood: best_ll,
        iterations,
        theta: best_theta,
    }
}

/// Box-constrained EM with random feasible restarts plus optional extra
/// starting points; returns the best-likelihood iterate.
pub fn hmm_em_fit<R: Rng + ?Sized>(
    model: &HmmModel,
    data: &HmmSample,
    opts: &EmOptions,
    extra_starts: &[Vec<f64>],
    rng: &mut R,
) -> Result<EmFit> {
    if data.observations.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    model.check_data(data)?;
    let mut starts: Vec<Vec<f64>> = (0..opts.restarts.max(1)).map(|_| model.random_start(rng)).collect();
    for s in extra_starts {
        model.space.check(s)?;
        starts.push(s.clone());
    }
    let runs: Vec<EmRun> = starts.into_iter().map(|s| em_run(model, data, s, opts)).collect();
    let best = runs
        .iter()
        .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        .expect("at least one run");
    Ok(EmFit {
        theta: best.theta.clone(),
        log_likelihood: best.log_likelihood,
        runs: runs.clone(),
    })
}

/// Minimizer of `K_n` over a one-state model: the emission row maximizing
/// `sum_t sum_x p*_t(x) log nu(x)`.
pub fn min_loss_single_state(model: &HmmModel, truth: &[Law]) -> Result<Vec<f64>> {
    if model.states != 1 {
        return Err(Error::InvalidModel("closed form needs h = 1".into()));
    }
    let mut weights = vec![0.0; model.alphabet];
    for law in truth {
        for (w, p) in weights.iter_mut().zip(law.probs()) {
            *w += p;
        }
    }
    let nu = box_simplex_mle(&weights, model.lo_e, 1.0, 1.0);
    Ok(model.assemble(&[1.0], &[1.0], &nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::partial_log_likelihood;
    use crate::rng::seeded;

    fn two_state(n: usize) -> (HmmModel, Vec<f64>) {
        let m = HmmModel::new(2, 3, 1.0, 1.0, n).unwrap();
        let theta = m.assemble(
            &[0.5, 0.5],
            &[0.9, 0.1, 0.2, 0.8],
            &[0.7, 0.2, 0.1, 0.1, 0.2, 0.7],
        );
        (m, theta)
    }

    #[test]
    fn dimension_formula() {
        let m = HmmModel::new(3, 4, 1.0, 1.0, 100).unwrap();
        assert_eq!(m.dim(), 3 * 3 + 9 - 1);
    }

    #[test]
    fn empty_boxes_are_rejected() {
        assert!(matches!(
            HmmModel::new(2, 3, 0.1, 1.0, 10),
            Err(Error::NoFeasibleInit(_))
        ));
        assert!(matches!(
            HmmModel::new(2, 30, 1.0, 0.1, 10),
            Err(Error::NoFeasibleInit(_))
        ));
    }

    #[test]
    fn predictives_sum_to_one_and_sandwich() {
        let (m, theta) = two_state(200);
        let mut rng = seeded(1);
        let (data, _) = sample_hmm(&m, &theta, 200, &mut rng).unwrap();
        let laws = m.laws(&theta, &data).unwrap();
        let spread = (200f64).ln();
        for (law, &x) in laws.iter().zip(&data.observations) {
            assert!((law.total() - 1.0).abs() < 1e-12);
            let p = law.log_density[x].exp();
            let bar = m.mean_emission(&theta, x);
            assert!(p >= bar / spread - 1e-15 && p <= bar * spread + 1e-15);
        }
    }

    #[test]
    fn single_state_predictive_is_the_emission() {
        let m = HmmModel::new(1, 3, 1.0, 1.0, 50).unwrap();
        let theta = m.assemble(&[1.0], &[1.0], &[0.5, 0.3, 0.2]);
        let data = HmmSample::new(vec![0, 2, 1, 1, 0], 3).unwrap();
        let ll = partial_log_likelihood(&m, &theta, &data).unwrap();
        let direct = 2.0 * 0.5f64.ln() + 0.2f64.ln() + 2.0 * 0.3f64.ln();
        assert!((ll - direct).abs() < 1e-14);
    }

    #[test]
    fn em_is_monotone_and_deterministic() {
        let (m, theta) = two_state(1000);
        let mut rng = seeded(5);
        let (data, _) = sample_hmm(&m, &theta, 1000, &mut rng).unwrap();
        let opts = EmOptions {
            restarts: 2,
            max_iter: 100,
            tol: 1e-9,
        };
        let a = hmm_em_fit(&m, &data, &opts, &[], &mut seeded(9)).unwrap();
        let b = hmm_em_fit(&m, &data, &opts, &[], &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        for run in &a.runs {
            assert!(run.log_likelihood >= run.initial_log_likelihood);
        }
        assert!(m.theta_space().contains(&a.theta));
        let ll = partial_log_likelihood(&m, &a.theta, &data).unwrap();
        assert!((ll - a.log_likelihood).abs() < 1e-8 * ll.abs());
    }

    #[test]
    fn embedding_preserves_the_laws() {
        let (small, theta) = two_state(500);
        let big = HmmModel::new(3, 3, 1.0, 1.0, 500).unwrap();
        let lifted = big.embed(&small, &theta).unwrap();
        let mut rng = seeded(2);
        let (data, _) = sample_hmm(&small, &theta, 60, &mut rng).unwrap();
        let a = small.observed_log_densities(&theta, &data).unwrap();
        let b = big.observed_log_densities(&lifted, &data).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
