use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{t_epsilon, Partition, PartitionModel};
use crate::error::{Error, Result};
use crate::histogram::{HistogramDensity, HistogramModel};
use crate::hmm::HmmModel;
use crate::model::{Family, Regime};
use crate::neuro::{nested_candidates, NetworkParams, RateFunction, Variant};
use crate::selection::{default_grid, PenaltySpec, DEFAULT_COVERAGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replications: usize,
    /// Sample size, or trajectory length for the dependent families.
    pub n: usize,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    pub kappa: f64,
    /// Deviation level of the oracle inequality.
    pub x: f64,
    pub penalty: PenaltyConfig,
    pub family: FamilyConfig,
    /// Extra horizons for the risk-versus-n curve.
    #[serde(default)]
    pub risk_n: Vec<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_regime() -> Regime {
    Regime::Bounded
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum PenaltyConfig {
    Fixed {
        constant: f64,
    },
    Calibrate {
        replications: usize,
        #[serde(default)]
        grid: Option<Vec<f64>>,
        #[serde(default = "default_coverage")]
        coverage: f64,
        #[serde(default)]
        choice: CalibratedChoice,
    },
}

fn default_coverage() -> f64 {
    DEFAULT_COVERAGE
}

/// Which calibrated constant drives selection on the held-out replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibratedChoice {
    /// Smallest constant reaching the coverage target.
    #[default]
    Coverage,
    /// Smallest mean risk among constants reaching the coverage target.
    RiskOptimal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyConfig {
    Histogram {
        /// Heights of the true piecewise-constant density on `[0, 1]`.
        truth: Vec<f64>,
        bins: Vec<usize>,
        epsilon: f64,
    },
    Hmm {
        alphabet: usize,
        states: Vec<usize>,
        c_q: f64,
        alpha: f64,
        truth: HmmTruth,
        #[serde(default = "default_restarts")]
        restarts: usize,
    },
    Neuro {
        network: NetworkParams,
        variant: Variant,
        target: usize,
        /// Neighborhoods are prefixes of this order.
        order: Vec<usize>,
        lags: Vec<usize>,
        epsilon: f64,
        window: usize,
    },
    Exp3 {
        arms: usize,
        /// Number of equal blocks in the true partition.
        truth_cells: usize,
        truth_theta: Vec<f64>,
        cells: Vec<usize>,
        horizon_scale: f64,
        r_min: f64,
        r_max: f64,
        epsilon: f64,
    },
}

fn default_restarts() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmmTruth {
    pub pi: Vec<f64>,
    /// Row-major `h x h` transition matrix.
    pub q: Vec<f64>,
    /// Row-major `h x |X|` emission matrix.
    pub nu: Vec<f64>,
}

impl HmmTruth {
    pub fn states(&self) -> usize {
        self.pi.len()
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::IoFailure(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn horizons(&self) -> Vec<usize> {
        let mut ns = self.risk_n.clone();
        ns.push(self.n);
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    pub fn grid(&self) -> Vec<f64> {
        match &self.penalty {
            PenaltyConfig::Calibrate { grid: Some(g), .. } => g.clone(),
            _ => default_grid(),
        }
    }

    /// Full validation; builds every candidate model at every horizon so that
    /// no computation starts on a config that would fail later.
    pub fn validate(&self) -> Result<()> {
        if !(self.x > 0.0 && self.x.is_finite()) {
            return Err(invalid(format!("x = {} must be positive", self.x)));
        }
        let probe_c = match &self.penalty {
            PenaltyConfig::Fixed { constant } => *constant,
            PenaltyConfig::Calibrate {
                replications,
                grid,
                coverage,
                ..
            } => {
                if *replications == 0 {
                    return Err(invalid("calibration needs at least one replication"));
                }
                if !(*coverage > 0.0 && *coverage <= 1.0) {
                    return Err(invalid(format!("coverage = {coverage} not in (0, 1]")));
                }
                if let Some(g) = grid {
                    if g.is_empty() || g.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
                        return Err(invalid("grid must be nonempty and positive"));
                    }
                    if g.windows(2).any(|w| w[1] < w[0]) {
                        return Err(invalid("grid must be nondecreasing"));
                    }
                }
                1.0
            }
        };
        for &n in &self.horizons() {
            PenaltySpec::new(self.regime, self.kappa, probe_c, n).map_err(|e| invalid(e.to_string()))?;
            self.family.validate(n, self.regime)?;
        }
        Ok(())
    }
}

impl FamilyConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            FamilyConfig::Histogram { .. } => "histogram",
            FamilyConfig::Hmm { .. } => "hmm",
            FamilyConfig::Neuro { .. } => "neuro",
            FamilyConfig::Exp3 { .. } => "exp3",
        }
    }

    fn validate(&self, n: usize, regime: Regime) -> Result<()> {
        let wrap = |e: Error| invalid(format!("{}: {e}", self.kind()));
        if regime == Regime::Unbounded && !matches!(self, FamilyConfig::Hmm { .. }) {
            return Err(invalid(format!("{} supports only the bounded regime", self.kind())));
        }
        match self {
            FamilyConfig::Histogram { truth, bins, epsilon } => {
                HistogramDensity::new(truth.clone()).map_err(wrap)?;
                nonempty_distinct(bins, "bins")?;
                for &d in bins {
                    HistogramModel::new(d, *epsilon).map_err(wrap)?;
                }
            }
            FamilyConfig::Hmm {
                alphabet,
                states,
                c_q,
                alpha,
                truth,
                restarts,
            } => {
                nonempty_distinct(states, "states")?;
                if *restarts == 0 {
                    return Err(invalid("hmm: restarts must be >= 1"));
                }
                let h = truth.states();
                let tm = HmmModel::new(h, *alphabet, *c_q, *alpha, n).map_err(wrap)?;
                if truth.q.len() != h * h || truth.nu.len() != h * alphabet {
                    return Err(invalid("hmm: truth matrix shapes do not match"));
                }
                let theta = tm.assemble(&truth.pi, &truth.q, &truth.nu);
                tm.theta_space().check(&theta).map_err(wrap)?;
                for &s in states {
                    let m = HmmModel::new(s, *alphabet, *c_q, *alpha, n).map_err(wrap)?;
                    if regime == Regime::Unbounded {
                        m.into_unbounded().map_err(wrap)?;
                    }
                }
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
                network.validate().map_err(wrap)?;
                if *target >= network.neurons() {
                    return Err(invalid(format!("neuro: target {target} out of range")));
                }
                nonempty_distinct(order, "order")?;
                nonempty_distinct(lags, "lags")?;
                if order.iter().any(|&j| j >= network.neurons()) {
                    return Err(invalid("neuro: order names an unknown neuron"));
                }
                let max_lag = lags.iter().copied().max().unwrap_or(0).max(network.lag);
                if *window < max_lag {
                    return Err(invalid(format!("neuro: window {window} shorter than lag {max_lag}")));
                }
                nested_candidates(*target, order, lags, *variant, network.phi, *epsilon).map_err(wrap)?;
                if let RateFunction::Linear { mu } = network.phi {
                    if !(mu > 0.0 && mu < 1.0) {
                        return Err(invalid(format!("neuro: mu = {mu}")));
                    }
                }
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
                nonempty_distinct(cells, "cells")?;
                if truth_theta.len() != *truth_cells {
                    return Err(invalid("exp3: truth_theta length must equal truth_cells"));
                }
                let t_eps = t_epsilon(*truth_cells, *horizon_scale, *epsilon, *r_max);
                if n > t_eps {
                    return Err(invalid(format!("exp3: n = {n} exceeds T_eps = {t_eps}")));
                }
                let truth = PartitionModel::new(
                    Partition::blocks(*arms, *truth_cells).map_err(wrap)?,
                    *horizon_scale,
                    *r_min,
                    *r_max,
                    *epsilon,
                    n,
                )
                .map_err(wrap)?;
                truth.theta_space().check(truth_theta).map_err(wrap)?;
                for &d in cells {
                    PartitionModel::new(Partition::blocks(*arms, d).map_err(wrap)?, *horizon_scale, *r_min, *r_max, *epsilon, n)
                        .map_err(wrap)?;
                }
            }
        }
        Ok(())
    }
}

fn nonempty_distinct(v: &[usize], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(invalid(format!("{what} must be nonempty")));
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != v.len() {
        return Err(invalid(format!("{what} has duplicates")));
    }
    Ok(())
}
