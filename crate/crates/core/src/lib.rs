//! Penalized partial-likelihood model selection for dependent,
//! non-stationary discrete-time processes.
//!
//! A model family supplies conditional laws `p^m_{theta,t}` along an observed
//! trajectory ([`model::Family`]). Each family is fitted by maximum partial
//! likelihood, models are compared through `-l_n(theta_hat)/n + pen(m)`
//! ([`selection`]), and in simulation the selected estimator is scored with
//! the stochastic Kullback-Leibler loss `K_n` ([`loss`]).
//!
//! Four families are provided: i.i.d. histograms, finite hidden Markov
//! models, discrete-time Hawkes / Galves-Löcherbach spiking networks and
//! Exp3 learning trajectories.

pub mod error;
pub mod model;
pub mod optim;
pub mod rng;
pub mod selection;
pub mod loss;
pub mod histogram;
pub mod hmm;
pub mod neuro;
pub mod bandit;
pub mod harness;

pub use error::{Error, Result};
pub use model::{
    check_assumption_bounds, estimate_lipschitz, partial_log_likelihood, AssumptionConstants,
    FixedParameter,
    Constraint, Family, Law, NormId, Oracle, Regime, ThetaSpace, Trajectory,
};
pub use selection::{select_model, Candidate, PenaltySpec, SelectionReport};
pub use loss::{LossReport, stochastic_kl};
