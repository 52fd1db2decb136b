//! One replication per family: simulate the truth, fit every candidate by
//! maximum partial likelihood, and score each fit and each model's best
//! approximation with the oracle loss.

use crate::bandit::{min_loss_partition, mle_partition, simulate_partition_learner, Partition, PartitionModel};
use crate::error::Result;
use crate::histogram::{min_loss_histogram, mle_histogram, sample_iid, HistogramDensity, HistogramModel};
use crate::hmm::{hmm_em_fit, min_loss_single_state, sample_hmm, EmOptions, HmmModel};
use crate::loss::loss_from_laws;
use crate::model::{partial_log_likelihood, Family, Law, Regime};
use crate::neuro::{min_loss_neuro, nested_candidates, neuro_mle, simulate_network, NetworkParams, NeuroModel, Variant};
use crate::rng::{substream, Purpose};
use crate::selection::{Candidate, FitSummary, ReplicationFits};

use super::config::FamilyConfig;

/// Simulates and fits one replication at a fixed horizon.
pub trait Scenario: Send + Sync {
    fn n(&self) -> usize;
    fn regime(&self) -> Regime;
    /// `(name, dim, constants)` of every candidate, in id order.
    fn models(&self) -> Vec<(String, usize, crate::model::AssumptionConstants)>;
    fn replicate(&self, seed: u64, replication: u64) -> Result<ReplicationFits>;
}

fn k_n(truth: &[Law], cand: &[Law], f_inf: f64, regime: Regime) -> Result<f64> {
    Ok(loss_from_laws(truth, cand, f_inf, regime == Regime::Unbounded)?.k_n)
}

fn summary<F: Family>(
    id: usize,
    model: &F,
    data: &F::Data,
    theta_hat: Vec<f64>,
    truth: &[Law],
    n: usize,
    theta_inf: Option<Vec<f64>>,
) -> Result<FitSummary> {
    let c = model.constants();
    let f_inf = c.f_inf(n);
    let log_likelihood = partial_log_likelihood(model, &theta_hat, data)?;
    let loss_at_fit = k_n(truth, &model.laws(&theta_hat, data)?, f_inf, c.regime)?;
    let loss_inf = match theta_inf {
        // the infimum lies below the loss at any parameter, the fit included
        Some(t) => k_n(truth, &model.laws(&t, data)?, f_inf, c.regime)?.min(loss_at_fit),
        None => loss_at_fit,
    };
    Ok(FitSummary {
        candidate: Candidate {
            id,
            name: model.name(),
            dim: model.dim(),
            constants: c.clone(),
            theta_hat,
            log_likelihood,
        },
        loss_at_fit,
        loss_inf,
    })
}

fn describe<F: Family>(models: &[F]) -> Vec<(String, usize, crate::model::AssumptionConstants)> {
    models.iter().map(|m| (m.name(), m.dim(), m.constants().clone())).collect()
}

pub fn build(family: &FamilyConfig, n: usize, regime: Regime) -> Result<Box<dyn Scenario>> {
    Ok(match family {
        FamilyConfig::Histogram { truth, bins, epsilon } => Box::new(HistogramScenario {
            truth: HistogramDensity::new(truth.clone())?,
            models: bins.iter().map(|&d| HistogramModel::new(d, *epsilon)).collect::<Result<_>>()?,
            n,
        }),
        FamilyConfig::Hmm {
            alphabet,
            states,
            c_q,
            alpha,
            truth,
            restarts,
        } => {
            let shape = |h: usize| -> Result<HmmModel> {
                let m = HmmModel::new(h, *alphabet, *c_q, *alpha, n)?;
                match regime {
                    Regime::Bounded => Ok(m),
                    Regime::Unbounded => m.into_unbounded(),
                }
            };
            let truth_model = shape(truth.states())?;
            let truth_theta = truth_model.assemble(&truth.pi, &truth.q, &truth.nu);
            Box::new(HmmScenario {
                truth_theta,
                truth_model,
                models: states.iter().map(|&h| shape(h)).collect::<Result<_>>()?,
                opts: EmOptions {
                    restarts: *restarts,
                    ..EmOptions::default()
                },
                n,
                regime,
            })
        }
        FamilyConfig::Neuro {
            network,
            variant,
            target,
            order,
            lags,
            epsilon,
            window,
        } => {
            let (truth_model, truth_theta) = network.truth(*target, *variant)?;
            Box::new(NeuroScenario {
                network: network.clone(),
                variant: *variant,
                truth_model,
                truth_theta,
                models: nested_candidates(*target, order, lags, *variant, network.phi, *epsilon)?,
                window: *window,
                n,
            })
        }
        FamilyConfig::Exp3 {
            arms,
            truth_cells,
            truth_theta,
            cells,
            horizon_scale,
            r_min,
            r_max,
            epsilon,
        } => {
            let make = |d: usize| {
                PartitionModel::new(Partition::blocks(*arms, d)?, *horizon_scale, *r_min, *r_max, *epsilon, n)
            };
            Box::new(Exp3Scenario {
                truth: make(*truth_cells)?,
                truth_theta: truth_theta.clone(),
                models: cells.iter().map(|&d| make(d)).collect::<Result<_>>()?,
                n,
            })
        }
    })
}

struct HistogramScenario {
    truth: HistogramDensity,
    models: Vec<HistogramModel>,
    n: usize,
}

impl Scenario for HistogramScenario {
    fn n(&self) -> usize {
        self.n
    }

    fn regime(&self) -> Regime {
        Regime::Bounded
    }

    fn models(&self) -> Vec<(String, usize, crate::model::AssumptionConstants)> {
        describe(&self.models)
    }

    fn replicate(&self, seed: u64, replication: u64) -> Result<ReplicationFits> {
        let sample = sample_iid(&self.truth, self.n, &mut substream(seed, replication, Purpose::Simulate));
        // i.i.d.: every step carries the same law, so one step gives K_n
        let truth = [self.truth.law()];
        let mut models = Vec::with_capacity(self.models.len());
        for (id, m) in self.models.iter().enumerate() {
            let theta = mle_histogram(m, &sample)?;
            let c = m.constants();
            let log_likelihood = partial_log_likelihood(m, &theta, &sample)?;
            let loss_at_fit = k_n(&truth, &[m.law(&theta)], c.f_inf(self.n), c.regime)?;
            let best = min_loss_histogram(m, &self.truth);
            let loss_inf = k_n(&truth, &[m.law(&best)], c.f_inf(self.n), c.regime)?.min(loss_at_fit);
            models.push(FitSummary {
                candidate: Candidate {
                    id,
                    name: m.name(),
                    dim: m.dim(),
                    constants: c.clone(),
                    theta_hat: theta,
                    log_likelihood,
                },
                loss_at_fit,
                loss_inf,
            });
        }
        Ok(ReplicationFits {
            replication: replication as usize,
            n: self.n,
            models,
        })
    }
}

struct HmmScenario {
    truth_model: HmmModel,
    truth_theta: Vec<f64>,
    models: Vec<HmmModel>,
    opts: EmOptions,
    n: usize,
    regime: Regime,
}

impl Scenario for HmmScenario {
    fn n(&self) -> usize {
        self.n
    }

    fn regime(&self) -> Regime {
        self.regime
    }

    fn models(&self) -> Vec<(String, usize, crate::model::AssumptionConstants)> {
        describe(&self.models)
    }

    fn replicate(&self, seed: u64, replication: u64) -> Result<ReplicationFits> {
        let (data, _) = sample_hmm(
            &self.truth_model,
            &self.truth_theta,
            self.n,
            &mut substream(seed, replication, Purpose::Simulate),
        )?;
        let truth = self.truth_model.laws(&self.truth_theta, &data)?;
        let mut rng = substream(seed, replication, Purpose::Fit);
        let mut models = Vec::with_capacity(self.models.len());
        for (id, m) in self.models.iter().enumerate() {
            let fit = hmm_em_fit(m, &data, &self.opts, &[], &mut rng)?;
            // exact for h >= h* (state duplication) and h = 1 (closed form);
            // otherwise the loss at the fit
            let theta_inf = match m.embed(&self.truth_model, &self.truth_theta) {
                Some(t) => Some(t),
                None if m.states() == 1 => Some(min_loss_single_state(m, &truth)?),
                None => None,
            };
            models.push(summary(id, m, &data, fit.theta, &truth, self.n, theta_inf)?);
        }
        Ok(ReplicationFits {
            replication: replication as usize,
            n: self.n,
            models,
        })
    }
}

struct NeuroScenario {
    network: NetworkParams,
    variant: Variant,
    truth_model: NeuroModel,
    truth_theta: Vec<f64>,
    models: Vec<NeuroModel>,
    window: usize,
    n: usize,
}

impl Scenario for NeuroScenario {
    fn n(&self) -> usize {
        self.n
    }

    fn regime(&self) -> Regime {
        Regime::Bounded
    }

    fn models(&self) -> Vec<(String, usize, crate::model::AssumptionConstants)> {
        describe(&self.models)
    }

    fn replicate(&self, seed: u64, replication: u64) -> Result<ReplicationFits> {
        let raster = simulate_network(
            &self.network,
            self.variant,
            self.n,
            self.window,
            &mut substream(seed, replication, Purpose::Simulate),
        )?;
        let probs = self.truth_model.spike_probs(&self.truth_theta, &raster)?;
        let truth: Vec<Law> = probs.iter().map(|&p| Law::from_probs(&[1.0 - p, p])).collect();
        let mut models = Vec::with_capacity(self.models.len());
        for (id, m) in self.models.iter().enumerate() {
            let (theta, _) = neuro_mle(m, &raster)?;
            let best = min_loss_neuro(m, &raster, &probs)?;
            models.push(summary(id, m, &raster, theta, &truth, self.n, Some(best))?);
        }
        Ok(ReplicationFits {
            replication: replication as usize,
            n: self.n,
            models,
        })
    }
}

struct Exp3Scenario {
    truth: PartitionModel,
    truth_theta: Vec<f64>,
    models: Vec<PartitionModel>,
    n: usize,
}

impl Scenario for Exp3Scenario {
    fn n(&self) -> usize {
        self.n
    }

    fn regime(&self) -> Regime {
        Regime::Bounded
    }

    fn models(&self) -> Vec<(String, usize, crate::model::AssumptionConstants)> {
        describe(&self.models)
    }

    fn replicate(&self, seed: u64, replication: u64) -> Result<ReplicationFits> {
        let (traj, rows) = simulate_partition_learner(
            &self.truth,
            &self.truth_theta,
            self.n,
            &mut substream(seed, replication, Purpose::Simulate),
        )?;
        let truth: Vec<Law> = rows.iter().map(|p| Law::from_probs(p)).collect();
        let mut models = Vec::with_capacity(self.models.len());
        for (id, m) in self.models.iter().enumerate() {
            let fit = mle_partition(m, &traj)?;
            let best = min_loss_partition(m, &traj, &rows)?;
            models.push(summary(id, m, &traj, fit.theta, &truth, self.n, Some(best))?);
        }
        Ok(ReplicationFits {
            replication: replication as usize,
            n: self.n,
            models,
        })
    }
}
