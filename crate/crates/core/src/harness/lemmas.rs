//! Numerical lemma checks on random instances of every family.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{simulate_exp3, Exp3Config, Exp3Model};
use crate::error::Result;
use crate::histogram::{waterfill, HistogramModel};
use crate::hmm::{sample_hmm, HmmModel};
use crate::loss::{check_logratio_hellinger, loss_from_laws, LossReport};
use crate::model::Family;
use crate::neuro::{NeuroModel, RateFunction, SpikeRaster, Variant};
use crate::rng::{substream, Purpose, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
}

impl LemmaCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub const FAMILIES: [&str; 4] = ["histogram", "hmm", "neuro", "exp3"];
pub const LAMBDAS: [f64; 3] = [0.5, 0.1, 0.01];

fn report_for<F: Family>(model: &F, truth: &[f64], cand: &[f64], data: &F::Data) -> Result<LossReport> {
    let t = model.laws(truth, data)?;
    let c = model.laws(cand, data)?;
    loss_from_laws(&t, &c, model.constants().f_inf(t.len()), false)
}

/// Loss report between two random parameters of a random model of `family`.
pub fn random_instance(family: &str, rng: &mut SimRng) -> Result<LossReport> {
    match family {
        "histogram" => {
            let d = rng.random_range(1..=8);
            let eps = rng.random_range(0.02..0.3);
            let m = HistogramModel::new(d, eps)?;
            let mut draw = || {
                let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
                waterfill(&w, eps)
            };
            let (a, b) = (draw(), draw());
            loss_from_laws(&[m.law(&a)], &[m.law(&b)], m.constants().f_inf(1), false)
        }
        "hmm" => {
            let h = rng.random_range(1..=3);
            let k = rng.random_range(2..=4);
            let n = 40;
            let m = HmmModel::new(h, k, 1.0, 1.0, n)?;
            let (a, b) = (m.random_start(rng), m.random_start(rng));
            let (data, _) = sample_hmm(&m, &a, n, rng)?;
            report_for(&m, &a, &b, &data)
        }
        "neuro" => {
            let neurons = rng.random_range(1..=3);
            let lag = rng.random_range(1..=3);
            let n = 60;
            let variant = if rng.random::<bool>() { Variant::Hawkes } else { Variant::Gl };
            let m = NeuroModel::new(0, (0..neurons).collect(), lag, variant, RateFunction::Sigmoid, 0.05)?;
            let spikes: Vec<Vec<u8>> = (0..neurons)
                .map(|_| (0..=n + lag).map(|_| rng.random_bool(0.3) as u8).collect())
                .collect();
            let raster = SpikeRaster::new(lag, n, spikes)?;
            let (a, b) = (m.random_feasible(rng), m.random_feasible(rng));
            report_for(&m, &a, &b, &raster)
        }
        "exp3" => {
            let arms = rng.random_range(2..=4);
            let config = Exp3Config {
                arms,
                horizon_scale: 40_000.0,
                r_min: 0.2,
                r_max: 2.0,
                losses: (0..arms).map(|_| rng.random::<f64>()).collect(),
                epsilon: 0.5 / arms as f64,
            };
            let m = Exp3Model::new(config.clone())?;
            let a = rng.random_range(0.2..=2.0);
            let b = rng.random_range(0.2..=2.0);
            let (traj, _) = simulate_exp3(&config, a, rng)?;
            report_for(&m, &[a], &[b], &traj)
        }
        other => Err(crate::Error::InvalidConfig(format!("unknown family {other}"))),
    }
}

fn instances(seed: u64, family_index: usize, count: usize) -> Result<Vec<LossReport>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed.wrapping_add(family_index as u64), i as u64, Purpose::Probe);
            random_instance(FAMILIES[family_index], &mut rng)
        })
        .collect()
}

fn tally(name: String, pairs: impl Iterator<Item = (f64, f64)>) -> LemmaCheck {
    let (mut count, mut violations, mut max_ratio) = (0, 0, 0.0f64);
    for (lhs, rhs) in pairs {
        count += 1;
        if lhs > rhs {
            violations += 1;
        }
        if lhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    LemmaCheck {
        name,
        instances: count,
        violations,
        max_ratio,
    }
}

/// Random pair of strictly positive densities on `k` points; every third
/// pair is pushed far apart so the truncation in the lemma bites.
pub fn random_pair(rng: &mut SimRng) -> (Vec<f64>, Vec<f64>) {
    let k = rng.random_range(2..=6);
    let spread = if rng.random_range(0..3) == 0 { 8.0 } else { 1.0 };
    let mut draw = |s: f64| {
        let w: Vec<f64> = (0..k).map(|_| (s * rng.random_range(-1.0..1.0f64)).exp()).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|v| v / t).collect::<Vec<f64>>()
    };
    (draw(spread), draw(spread))
}

/// Variance bound, Hellinger-versus-loss bound and the log-ratio/Hellinger
/// comparison; `instances` random instances per family and `pairs` density
/// pairs per `lambda`.
pub fn check_lemmas(seed: u64, instances_per_family: usize, pairs: usize) -> Result<Vec<LemmaCheck>> {
    let mut out = Vec::new();
    for (i, family) in FAMILIES.iter().enumerate() {
        let reports = instances(seed, i, instances_per_family)?;
        out.push(tally(
            format!("variance/{family}"),
            reports.iter().map(|r| (r.v_n, 16.0 * r.f_inf * r.f_inf * r.k_n)),
        ));
        out.push(tally(
            format!("hellinger/{family}"),
            reports.iter().map(|r| (2.0 * r.hellinger_sq, r.k_n)),
        ));
    }
    for (j, &lambda) in LAMBDAS.iter().enumerate() {
        let checks: Vec<(f64, f64)> = (0..pairs)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed.wrapping_add(100 + j as u64), i as u64, Purpose::Probe);
                let (p, q) = random_pair(&mut rng);
                check_logratio_hellinger(&p, &q, lambda).map(|r| (r.lhs, r.rhs))
            })
            .collect::<Result<_>>()?;
        out.push(tally(format!("log-ratio/lambda={lambda}"), checks.into_iter()));
    }
    Ok(out)
}
