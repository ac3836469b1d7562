//! Biased stochastic gradient descent (BSGD) for conditional stochastic
//! optimization.
//!
//! The objective class is the nested expectation
//!
//! ```text
//!     F(x) = E_xi[ f_xi( E_{eta|xi}[ g_eta(x, xi) ] ) ]
//! ```
//!
//! whose gradient cannot be estimated without bias from finite samples: the
//! inner expectation sits inside a nonlinear outer map. BSGD accepts that
//! bias, controls it with the inner batch size, and pays for it in the
//! convergence rate. This crate provides:
//!
//! * [`cso`] — the problem abstraction and the plug-in value/gradient
//!   estimators, plus a Monte-Carlo probe for measuring their bias;
//! * [`engine`] — projected-SGD and Adam loops over any [`cso::CsoProblem`],
//!   with stepsize/batch schedules and deterministic seeded traces;
//! * [`nn`] — a small dense ReLU network (forward, gradient, exact
//!   Hessian-vector products) used by the meta-learning and the
//!   instrumental-variable problems;
//! * [`problems`] — four reference instances: a quadratic with closed-form
//!   bias, invariant logistic regression, sine-wave model-agnostic
//!   meta-learning, and nonparametric instrumental-variable regression;
//! * [`baselines`] — sample-average approximation, first-order MAML, 2SLS /
//!   polynomial 2SLS, and direct least-squares network fitting;
//! * [`lower_bound`] — one-dimensional hard instances with a biased oracle
//!   whose error floor no first-order method can beat;
//! * [`diagnostics`] — suboptimality and Moreau-envelope gradient-mapping
//!   measurements, and observed-vs-predicted bound reports.

pub mod baselines;
pub mod cso;
pub mod diagnostics;
pub mod engine;
pub mod lower_bound;
pub mod nn;
pub mod problems;
pub mod rng;
pub mod stats;

pub use cso::{estimate_bias, estimate_gradient, estimate_value, BiasEstimate, CsoProblem, SlopeFit};
pub use engine::{
    bsgd_run, AdamParams, BatchSchedule, Domain, OutputPolicy, RunConfig, RunTrace, StepSchedule,
};
pub use nn::Mlp;
