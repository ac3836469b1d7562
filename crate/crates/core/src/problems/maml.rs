//! Sine-wave regression meta-learning as a nested-expectation problem.
//!
//! A scenario is a task — amplitude, phase, and a query batch from
//! `y = amp * sin(x + phase)` — and an inner sample is one labeled support
//! point of the same task. The inner map is the one-step adapted weight
//! vector
//!
//! ```text
//!     g_eta(w) = w - alpha * grad l(w; eta),
//! ```
//!
//! whose conditional expectation is the population-adapted vector, and the
//! outer map is the query loss at the adapted weights. Averaging `m`
//! support gradients before adapting is exactly the plug-in estimator, and
//! the estimator's Jacobian products need Hessian-vector products of the
//! support loss — the part first-order approximations drop.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cso::{CsoProblem, SmoothnessClass};
use crate::nn::Mlp;

#[derive(Debug, Clone)]
pub struct MamlSpec {
    /// Network architecture; the flat weight vector is the decision
    /// variable.
    pub net_dims: Vec<usize>,
    /// Adaptation stepsize `alpha`.
    pub inner_lr: f64,
    /// Task amplitudes are uniform on this interval.
    pub amp_range: (f64, f64),
    /// Task phases are uniform on this interval.
    pub phase_range: (f64, f64),
    /// Inputs (support and query) are uniform on this interval.
    pub input_range: (f64, f64),
    /// Support points per draw in contexts that do not impose their own
    /// batch size (the solver engine does; standalone evaluations do not).
    pub support_size: usize,
    /// Query points drawn with each scenario.
    pub query_size: usize,
}

impl Default for MamlSpec {
    fn default() -> Self {
        MamlSpec {
            net_dims: vec![1, 40, 40, 1],
            inner_lr: 0.01,
            amp_range: (0.1, 5.0),
            phase_range: (0.0, std::f64::consts::PI),
            input_range: (-5.0, 5.0),
            support_size: 10,
            query_size: 1,
        }
    }
}

/// One task draw: its parameters and a query batch.
#[derive(Debug, Clone)]
pub struct MamlTask {
    pub amp: f64,
    pub phase: f64,
    pub query_x: Array2<f64>,
    pub query_y: Array2<f64>,
}

/// One labeled support point.
#[derive(Debug, Clone, Copy)]
pub struct SupportPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct MamlProblem {
    spec: MamlSpec,
    net: Mlp,
}

impl MamlProblem {
    pub fn new(spec: MamlSpec) -> Self {
        assert!(spec.net_dims.first() == Some(&1) && spec.net_dims.last() == Some(&1));
        assert!(spec.inner_lr > 0.0);
        assert!(spec.amp_range.0 <= spec.amp_range.1);
        assert!(spec.query_size >= 1 && spec.support_size >= 1);
        let net = Mlp::seeded_init(spec.net_dims.clone(), 0).expect("valid architecture");
        MamlProblem { spec, net }
    }

    pub fn spec(&self) -> &MamlSpec {
        &self.spec
    }

    /// The architecture template (its own weights are never used; every
    /// evaluation passes the decision vector explicitly).
    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn sample_in(&self, range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(range.0..=range.1)
    }

    /// Draw a support batch of explicit size for one task.
    pub fn sample_support(
        &self,
        task: &MamlTask,
        m: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<SupportPoint> {
        (0..m)
            .map(|_| {
                let x = self.sample_in(self.spec.input_range, rng);
                SupportPoint { x, y: task.amp * (x + task.phase).sin() }
            })
            .collect()
    }

    fn support_to_batch(&self, batch: &[SupportPoint]) -> (Array2<f64>, Array2<f64>) {
        let xs = Array2::from_shape_fn((batch.len(), 1), |(i, _)| batch[i].x);
        let ys = Array2::from_shape_fn((batch.len(), 1), |(i, _)| batch[i].y);
        (xs, ys)
    }

    /// `w - alpha * grad l(w; support batch)`: the adapted weights. With a
    /// batch this equals the batch average of single-point adaptations,
    /// since the loss is a mean.
    pub fn adapt(&self, w: &Array1<f64>, support: &[SupportPoint]) -> Array1<f64> {
        let (xs, ys) = self.support_to_batch(support);
        let (_, grad) = self.net.loss_grad_with(w, &xs, &ys).expect("dims fixed at build");
        w - &(grad * self.spec.inner_lr)
    }

    /// Mean support-loss Hessian at `w` applied to `v`.
    pub fn support_hvp(
        &self,
        w: &Array1<f64>,
        support: &[SupportPoint],
        v: &Array1<f64>,
    ) -> Array1<f64> {
        let (xs, ys) = self.support_to_batch(support);
        self.net.hvp_with(w, &xs, &ys, v).expect("dims fixed at build")
    }

    /// Query loss at weights `u`.
    pub fn query_loss(&self, task: &MamlTask, u: &Array1<f64>) -> f64 {
        self.net.loss_with(u, &task.query_x, &task.query_y).expect("dims fixed at build")
    }
}

impl CsoProblem for MamlProblem {
    type Outer = MamlTask;
    type Inner = SupportPoint;

    fn dim_x(&self) -> usize {
        self.net.n_params()
    }

    fn dim_inner(&self) -> usize {
        self.net.n_params()
    }

    fn sample_outer(&self, rng: &mut ChaCha8Rng) -> MamlTask {
        let amp = self.sample_in(self.spec.amp_range, rng);
        let phase = self.sample_in(self.spec.phase_range, rng);
        let query_x = Array2::from_shape_fn((self.spec.query_size, 1), |_| {
            self.sample_in(self.spec.input_range, rng)
        });
        let query_y = query_x.mapv(|x| amp * (x + phase).sin());
        MamlTask { amp, phase, query_x, query_y }
    }

    fn sample_inner(&self, outer: &MamlTask, m: usize, rng: &mut ChaCha8Rng) -> Vec<SupportPoint> {
        self.sample_support(outer, m, rng)
    }

    fn g_value(&self, x: &Array1<f64>, _outer: &MamlTask, inner: &SupportPoint) -> Array1<f64> {
        self.adapt(x, std::slice::from_ref(inner))
    }

    fn g_jacobian_t_apply(
        &self,
        x: &Array1<f64>,
        _outer: &MamlTask,
        inner: &SupportPoint,
        v: &Array1<f64>,
    ) -> Array1<f64> {
        // d/dw [w - alpha grad l] = I - alpha H, symmetric.
        v - &(self.support_hvp(x, std::slice::from_ref(inner), v) * self.spec.inner_lr)
    }

    fn f_value(&self, outer: &MamlTask, u: &Array1<f64>) -> f64 {
        self.query_loss(outer, u)
    }

    fn f_grad(&self, outer: &MamlTask, u: &Array1<f64>) -> Array1<f64> {
        self.net
            .loss_grad_with(u, &outer.query_x, &outer.query_y)
            .expect("dims fixed at build")
            .1
    }

    fn true_objective(&self, _x: &Array1<f64>) -> Option<f64> {
        None
    }

    fn smoothness(&self) -> SmoothnessClass {
        // Squared loss of a ReLU network: smooth away from the
        // measure-zero kink set.
        SmoothnessClass::LipschitzSmooth
    }
}

/// Fixed-size empirical meta-objective: over `t_tasks` fresh tasks, adapt
/// on an `m_support`-point support batch and score on an `n_query`-point
/// query batch, then average. With all three counts at 100 this is the
/// evaluation protocol the experiment tables use.
pub fn maml_empirical_objective(
    problem: &MamlProblem,
    w: &Array1<f64>,
    t_tasks: usize,
    n_query: usize,
    m_support: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let spec = problem.spec();
    let mut total = 0.0;
    for _ in 0..t_tasks {
        let amp = rng.random_range(spec.amp_range.0..=spec.amp_range.1);
        let phase = rng.random_range(spec.phase_range.0..=spec.phase_range.1);
        let query_x = Array2::from_shape_fn((n_query, 1), |_| {
            rng.random_range(spec.input_range.0..=spec.input_range.1)
        });
        let query_y = query_x.mapv(|x| amp * (x + phase).sin());
        let task = MamlTask { amp, phase, query_x, query_y };
        let support = problem.sample_support(&task, m_support, rng);
        let adapted = problem.adapt(w, &support);
        total += problem.query_loss(&task, &adapted);
    }
    total / t_tasks as f64
}
