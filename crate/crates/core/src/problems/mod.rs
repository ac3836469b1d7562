//! Reference problem instances.
//!
//! Each submodule implements [`crate::cso::CsoProblem`] for one family:
//!
//! * [`quadratic`] — composition of a squared or absolute distance with a
//!   noisy identity inner map; bias and objective in closed form, so it
//!   anchors the calibration tests;
//! * [`logistic`] — logistic regression where only noisy views of each
//!   feature vector are available and the clean conditional mean is what
//!   the loss should see;
//! * [`maml`] — sine-wave regression meta-learning: the inner expectation
//!   is the one-step adapted weight vector, the outer map the query loss;
//! * [`iv`] — instrumental-variable regression with a neural response
//!   function, where the inner expectation is the conditional mean of the
//!   response given the instrument.

pub mod iv;
pub mod logistic;
pub mod maml;
pub mod quadratic;

pub use iv::{IvProblem, IvSpec, IvTruth};
pub use logistic::{LogisticProblem, LogisticSpec};
pub use maml::{maml_empirical_objective, MamlProblem, MamlSpec};
pub use quadratic::{OuterKind, OuterLaw, QuadraticProblem, QuadraticSpec};
