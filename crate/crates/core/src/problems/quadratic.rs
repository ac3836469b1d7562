//! Distance-to-shift compositions with a noisy identity inner map.
//!
//! The scenario is a scalar shift `y` drawn from a configurable law; the
//! inner samples are `g_eta(x) = x + eta` with `eta ~ N(0, sigma^2 I)`, so
//! the inner conditional mean is `x` itself and
//!
//! ```text
//!     F(x) = E_y f_y(x),   f_y(u) = ||u - y 1||^2   (squared kind)
//!                          f_y(u) = ||u - y 1||_1   (absolute kind)
//! ```
//!
//! Both the objective and the plug-in bias have closed forms, which makes
//! this family the measuring stick for everything else: the squared kind
//! has bias exactly `d sigma^2 / m` at every point, the absolute kind bias
//! `d sigma sqrt(2/(pi m))` at the origin under a zero shift.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cso::{CsoProblem, ProblemMeta, SmoothnessClass};

/// Law of the scalar shift `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterLaw {
    Constant(f64),
    /// Normal with the given mean and standard deviation.
    Normal { mean: f64, std: f64 },
    /// Either value with probability 1/2.
    TwoPoint(f64, f64),
}

impl OuterLaw {
    pub fn mean(&self) -> f64 {
        match self {
            OuterLaw::Constant(c) => *c,
            OuterLaw::Normal { mean, .. } => *mean,
            OuterLaw::TwoPoint(a, b) => 0.5 * (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            OuterLaw::Constant(_) => 0.0,
            OuterLaw::Normal { std, .. } => std * std,
            OuterLaw::TwoPoint(a, b) => {
                let d = 0.5 * (a - b);
                d * d
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            OuterLaw::Constant(c) => *c,
            OuterLaw::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            OuterLaw::TwoPoint(a, b) => {
                if rng.random::<bool>() {
                    *a
                } else {
                    *b
                }
            }
        }
    }

    /// `E |c - y|` where it has a finite closed form without special
    /// functions (constant and two-point laws; degenerate normals).
    fn abs_gap(&self, c: f64) -> Option<f64> {
        match self {
            OuterLaw::Constant(y) => Some((c - y).abs()),
            OuterLaw::Normal { mean, std } if *std == 0.0 => Some((c - mean).abs()),
            OuterLaw::Normal { .. } => None,
            OuterLaw::TwoPoint(a, b) => Some(0.5 * ((c - a).abs() + (c - b).abs())),
        }
    }
}

/// Shape of the outer map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterKind {
    /// `f_y(u) = ||u - y 1||^2`: smooth, 2-strongly-convex.
    Squared,
    /// `f_y(u) = ||u - y 1||_1`: Lipschitz with kinks.
    Absolute,
}

#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    pub dim: usize,
    /// Standard deviation of each inner noise coordinate.
    pub sigma_inner: f64,
    pub shift: OuterLaw,
    pub kind: OuterKind,
    /// Radius of the origin-centered ball the run is constrained to, when
    /// one is; lets [`CsoProblem::meta`] bound the gradient moment.
    pub domain_radius: Option<f64>,
}

impl QuadraticSpec {
    /// The instance behind the closed-form bias laws: scalar, unit noise,
    /// zero shift.
    pub fn unit(kind: OuterKind) -> Self {
        QuadraticSpec {
            dim: 1,
            sigma_inner: 1.0,
            shift: OuterLaw::Constant(0.0),
            kind,
            domain_radius: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    spec: QuadraticSpec,
}

impl QuadraticProblem {
    pub fn new(spec: QuadraticSpec) -> Self {
        assert!(spec.dim >= 1, "dimension must be positive");
        assert!(spec.sigma_inner >= 0.0, "inner noise std must be nonnegative");
        QuadraticProblem { spec }
    }

    pub fn spec(&self) -> &QuadraticSpec {
        &self.spec
    }

    /// The squared kind's minimizer `ybar * 1` (any dimension); the
    /// absolute kind shares it when the shift law is symmetric about its
    /// mean.
    pub fn minimizer(&self) -> Array1<f64> {
        Array1::from_elem(self.spec.dim, self.spec.shift.mean())
    }

    /// `F(x*)` in closed form where available.
    pub fn optimal_value(&self) -> Option<f64> {
        self.true_objective(&self.minimizer())
    }
}

/// Closed-form plug-in bias of the squared kind: `d sigma^2 / m` at every
/// point and shift law.
pub fn squared_bias(dim: usize, sigma: f64, m: usize) -> f64 {
    dim as f64 * sigma * sigma / m as f64
}

/// Closed-form plug-in bias of the absolute kind at the origin under a zero
/// shift: `d * E|N(0, sigma^2/m)| = d sigma sqrt(2 / (pi m))`.
pub fn absolute_bias_at_origin(dim: usize, sigma: f64, m: usize) -> f64 {
    dim as f64 * sigma * (2.0 / (std::f64::consts::PI * m as f64)).sqrt()
}

impl CsoProblem for QuadraticProblem {
    type Outer = f64;
    type Inner = Array1<f64>;

    fn dim_x(&self) -> usize {
        self.spec.dim
    }

    fn dim_inner(&self) -> usize {
        self.spec.dim
    }

    fn sample_outer(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.spec.shift.sample(rng)
    }

    fn sample_inner(&self, _outer: &f64, m: usize, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
        let sigma = self.spec.sigma_inner;
        (0..m)
            .map(|_| {
                Array1::from_iter(
                    (0..self.spec.dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)),
                )
            })
            .collect()
    }

    fn g_value(&self, x: &Array1<f64>, _outer: &f64, inner: &Array1<f64>) -> Array1<f64> {
        x + inner
    }

    fn g_jacobian_t_apply(
        &self,
        _x: &Array1<f64>,
        _outer: &f64,
        _inner: &Array1<f64>,
        v: &Array1<f64>,
    ) -> Array1<f64> {
        v.clone()
    }

    fn f_value(&self, outer: &f64, u: &Array1<f64>) -> f64 {
        match self.spec.kind {
            OuterKind::Squared => u.iter().map(|ui| (ui - outer) * (ui - outer)).sum(),
            OuterKind::Absolute => u.iter().map(|ui| (ui - outer).abs()).sum(),
        }
    }

    fn f_grad(&self, outer: &f64, u: &Array1<f64>) -> Array1<f64> {
        match self.spec.kind {
            OuterKind::Squared => u.mapv(|ui| 2.0 * (ui - outer)),
            // signum(0) = 0: the subgradient choice at the kink.
            OuterKind::Absolute => u.mapv(|ui| {
                if ui > *outer {
                    1.0
                } else if ui < *outer {
                    -1.0
                } else {
                    0.0
                }
            }),
        }
    }

    fn true_objective(&self, x: &Array1<f64>) -> Option<f64> {
        match self.spec.kind {
            OuterKind::Squared => {
                let ybar = self.spec.shift.mean();
                let var = self.spec.shift.variance();
                Some(
                    x.iter().map(|xi| (xi - ybar) * (xi - ybar)).sum::<f64>()
                        + self.spec.dim as f64 * var,
                )
            }
            OuterKind::Absolute => {
                let mut total = 0.0;
                for xi in x.iter() {
                    total += self.spec.shift.abs_gap(*xi)?;
                }
                Some(total)
            }
        }
    }

    fn smoothness(&self) -> SmoothnessClass {
        match self.spec.kind {
            OuterKind::Squared => SmoothnessClass::LipschitzSmooth,
            OuterKind::Absolute => SmoothnessClass::LipschitzOnly,
        }
    }

    fn meta(&self) -> ProblemMeta {
        let d = self.spec.dim as f64;
        let sigma = self.spec.sigma_inner;
        let sigma_g = Some(sigma * d.sqrt());
        match self.spec.kind {
            OuterKind::Squared => {
                // E ||grad Fhat||^2 = 4 sum_i E (x_i - y + etabar_i)^2,
                // bounded over the ball of radius R using the inner batch
                // size 1 (worst case over m >= 1).
                let m_sq = self.spec.domain_radius.map(|r| {
                    let ybar = self.spec.shift.mean().abs();
                    let center = (r + ybar * d.sqrt()).powi(2);
                    4.0 * (center + d * self.spec.shift.variance() + d * sigma * sigma)
                });
                ProblemMeta {
                    lipschitz_f: None,
                    smoothness_f: Some(2.0),
                    sigma_g,
                    strong_convexity: Some(2.0),
                    grad_second_moment: m_sq,
                }
            }
            OuterKind::Absolute => ProblemMeta {
                // The subgradient is a sign pattern: norm at most sqrt(d),
                // which also bounds the estimate's second moment.
                lipschitz_f: Some(d.sqrt()),
                smoothness_f: None,
                sigma_g,
                strong_convexity: Some(0.0),
                grad_second_moment: Some(d),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cso::{estimate_bias, estimate_gradient, estimate_value};
    use crate::rng::seeded_rng;
    use ndarray::array;

    #[test]
    fn objective_closed_forms() {
        // Squared, two-point shift {1,3}: mean 2, variance 1.
        let p = QuadraticProblem::new(QuadraticSpec {
            dim: 2,
            sigma_inner: 1.0,
            shift: OuterLaw::TwoPoint(1.0, 3.0),
            kind: OuterKind::Squared,
            domain_radius: None,
        });
        assert_eq!(p.true_objective(&array![0.0, 0.0]), Some(10.0)); // 4 + 4 + 2*1
        assert_eq!(p.optimal_value(), Some(2.0));

        // Absolute, constant shift.
        let p = QuadraticProblem::new(QuadraticSpec {
            dim: 2,
            sigma_inner: 0.5,
            shift: OuterLaw::Constant(1.0),
            kind: OuterKind::Absolute,
            domain_radius: None,
        });
        assert_eq!(p.true_objective(&array![3.0, 0.0]), Some(3.0)); // |3-1| + |0-1|

        // Absolute with a nondegenerate normal shift has no closed form here.
        let p = QuadraticProblem::new(QuadraticSpec {
            dim: 1,
            sigma_inner: 1.0,
            shift: OuterLaw::Normal { mean: 0.0, std: 1.0 },
            kind: OuterKind::Absolute,
            domain_radius: None,
        });
        assert_eq!(p.true_objective(&array![0.0]), None);
    }

    #[test]
    fn estimator_value_and_gradient_hand_case() {
        // d=1, sigma irrelevant: feed an explicit batch.
        let p = QuadraticProblem::new(QuadraticSpec::unit(OuterKind::Squared));
        let x = array![0.5];
        let batch = vec![array![0.1], array![-0.3]]; // mean inner value x - 0.1
        let y = 1.0;
        let v = estimate_value(&p, &x, &y, &batch).unwrap();
        assert!((v - 0.36).abs() < 1e-15, "Fhat = (0.4 - 1.0)^2 = 0.36, got {v}");
        let g = estimate_gradient(&p, &x, &y, &batch).unwrap();
        assert!((g[0] + 1.2).abs() < 1e-15, "grad = 2(0.4 - 1.0) = -1.2, got {}", g[0]);
    }

    #[test]
    fn subgradient_at_the_kink_is_zero() {
        let p = QuadraticProblem::new(QuadraticSpec::unit(OuterKind::Absolute));
        let g = p.f_grad(&0.5, &array![0.5]);
        assert_eq!(g[0], 0.0);
        let g = p.f_grad(&0.5, &array![0.7]);
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn measured_bias_tracks_the_squared_closed_form() {
        let p = QuadraticProblem::new(QuadraticSpec::unit(OuterKind::Squared));
        let x = array![0.0];
        let mut rng = seeded_rng(5);
        for m in [1usize, 4, 16] {
            let est = estimate_bias(&p, &x, m, 200_000, &mut rng).unwrap();
            let want = squared_bias(1, 1.0, m);
            assert!(
                (est.mean_gap - want).abs() <= 3.0 * est.std_err,
                "m={m}: measured {} vs closed form {want} (se {})",
                est.mean_gap,
                est.std_err
            );
        }
    }

    #[test]
    fn measured_bias_tracks_the_absolute_closed_form() {
        let p = QuadraticProblem::new(QuadraticSpec::unit(OuterKind::Absolute));
        let x = array![0.0];
        let mut rng = seeded_rng(6);
        for m in [1usize, 4, 16] {
            let est = estimate_bias(&p, &x, m, 200_000, &mut rng).unwrap();
            let want = absolute_bias_at_origin(1, 1.0, m);
            assert!(
                (est.mean_gap - want).abs() <= 3.0 * est.std_err,
                "m={m}: measured {} vs closed form {want} (se {})",
                est.mean_gap,
                est.std_err
            );
        }
    }

    #[test]
    fn zero_inner_noise_means_zero_bias() {
        // With deterministic g the plug-in estimate is unbiased, and the
        // batch size cannot matter.
        let p = QuadraticProblem::new(QuadraticSpec {
            dim: 3,
            sigma_inner: 0.0,
            shift: OuterLaw::TwoPoint(-1.0, 1.0),
            kind: OuterKind::Squared,
            domain_radius: None,
        });
        let x = array![0.3, -0.2, 0.1];
        let mut rng = seeded_rng(7);
        let small = estimate_bias(&p, &x, 1, 50_000, &mut rng).unwrap();
        let large = estimate_bias(&p, &x, 100, 50_000, &mut rng).unwrap();
        assert!(small.mean_gap <= 3.0 * small.std_err, "m=1 gap {}", small.mean_gap);
        assert!(large.mean_gap <= 3.0 * large.std_err, "m=100 gap {}", large.mean_gap);
    }

    #[test]
    fn bias_is_monotone_in_batch_size() {
        let p = QuadraticProblem::new(QuadraticSpec::unit(OuterKind::Squared));
        let x = array![0.0];
        let mut rng = seeded_rng(8);
        let mut prev = f64::INFINITY;
        for m in [1usize, 4, 16, 64] {
            let est = estimate_bias(&p, &x, m, 100_000, &mut rng).unwrap();
            assert!(
                est.mean_gap <= prev + 3.0 * est.std_err,
                "bias should not grow with m: m={m}, gap {} after {prev}",
                est.mean_gap
            );
            prev = est.mean_gap;
        }
    }

    #[test]
    fn meta_constants_hand_case() {
        let p = QuadraticProblem::new(QuadraticSpec {
            dim: 1,
            sigma_inner: 1.0,
            shift: OuterLaw::Normal { mean: 0.0, std: 1.0 },
            kind: OuterKind::Squared,
            domain_radius: Some(1.0),
        });
        let meta = p.meta();
        assert_eq!(meta.smoothness_f, Some(2.0));
        assert_eq!(meta.strong_convexity, Some(2.0));
        assert_eq!(meta.sigma_g, Some(1.0));
        // 4 * ((1 + 0)^2 + 1 + 1)
        assert_eq!(meta.grad_second_moment, Some(12.0));
    }
}
