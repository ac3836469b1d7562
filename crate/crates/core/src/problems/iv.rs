//! Instrumental-variable regression of a nonlinear structural function.
//!
//! The observed regressor is endogenous: the same shock `e` drives both it
//! and the response, so least squares on `(X, Y)` is inconsistent. With
//! instruments `Z` independent of the shocks, the structural function `g*`
//! satisfies `E[Y | Z] = E[g*(X) | Z]`, so fitting a network `h_w` by
//!
//! ```text
//!     min_w  E_{Y,Z} ( Y - E[h_w(X') | Z] )^2
//! ```
//!
//! is a nested-expectation problem: a scenario is `(Y, Z)`, and the inner
//! samples are fresh regressor redraws `X' | Z` with shocks independent of
//! the scenario's own. Averaging `m` redraws inside the residual is the
//! plug-in estimator; its bias is what the solver's inner batch size
//! controls.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cso::{CsoProblem, SmoothnessClass};
use crate::nn::Mlp;

/// Structural functions the generator can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvTruth {
    Abs,
    Linear,
    Sine,
    Step,
}

impl IvTruth {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            IvTruth::Abs => x.abs(),
            IvTruth::Linear => x,
            IvTruth::Sine => x.sin(),
            IvTruth::Step => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IvTruth::Abs => "abs",
            IvTruth::Linear => "linear",
            IvTruth::Sine => "sine",
            IvTruth::Step => "step",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IvSpec {
    pub truth: IvTruth,
    /// Network architecture for the fitted structural function.
    pub net_dims: Vec<usize>,
    /// Condition the regressor on the first instrument alone instead of
    /// the instrument mean.
    pub z_first_only: bool,
    /// Standard deviation of the shared confounding shock `e`.
    pub noise_e_std: f64,
    /// Variance of the idiosyncratic shocks added to regressor and
    /// response.
    pub noise_extra_var: f64,
}

impl IvSpec {
    pub fn standard(truth: IvTruth) -> Self {
        IvSpec {
            truth,
            net_dims: vec![1, 40, 40, 1],
            z_first_only: false,
            noise_e_std: 1.0,
            noise_extra_var: 0.1,
        }
    }
}

/// One `(Y, Z)` draw. The regressor realization behind `y` is kept so
/// observational baselines can train on the same generative law.
#[derive(Debug, Clone, Copy)]
pub struct IvScenario {
    pub y: f64,
    pub z: (f64, f64),
    /// The realized (endogenous) regressor. The nested objective never
    /// reads it.
    pub x_observed: f64,
}

#[derive(Debug, Clone)]
pub struct IvProblem {
    spec: IvSpec,
    net: Mlp,
}

impl IvProblem {
    pub fn new(spec: IvSpec) -> Self {
        assert!(spec.net_dims.first() == Some(&1) && spec.net_dims.last() == Some(&1));
        assert!(spec.noise_e_std >= 0.0 && spec.noise_extra_var >= 0.0);
        let net = Mlp::seeded_init(spec.net_dims.clone(), 0).expect("valid architecture");
        IvProblem { spec, net }
    }

    pub fn spec(&self) -> &IvSpec {
        &self.spec
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn instrument_summary(&self, z: (f64, f64)) -> f64 {
        if self.spec.z_first_only {
            z.0
        } else {
            0.5 * (z.0 + z.1)
        }
    }

    /// Regressor draw given the instrument summary and an explicit
    /// confounding shock.
    fn regressor(&self, zbar: f64, e: f64, rng: &mut ChaCha8Rng) -> f64 {
        let gamma = self.spec.noise_extra_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        0.5 * zbar + 0.5 * e + gamma
    }

    /// The fitted function at a single input, under weights `w`.
    pub fn h(&self, w: &Array1<f64>, x: f64) -> f64 {
        let input = Array2::from_elem((1, 1), x);
        self.net.forward_with(w, &input).expect("dims fixed at build")[(0, 0)]
    }

    /// Evaluation grid for reporting fit quality against the structural
    /// truth.
    pub fn test_grid() -> Vec<f64> {
        (1..=1000).map(|i| -5.0 + 0.01 * i as f64).collect()
    }

    /// Mean squared error of `h_w` against the structural function on the
    /// evaluation grid.
    pub fn grid_mse(&self, w: &Array1<f64>) -> f64 {
        let grid = Self::test_grid();
        let inputs = Array2::from_shape_fn((grid.len(), 1), |(i, _)| grid[i]);
        let out = self.net.forward_with(w, &inputs).expect("dims fixed at build");
        let mut total = 0.0;
        for (i, &x) in grid.iter().enumerate() {
            let r = out[(i, 0)] - self.spec.truth.eval(x);
            total += r * r;
        }
        total / grid.len() as f64
    }
}

impl CsoProblem for IvProblem {
    type Outer = IvScenario;
    type Inner = f64;

    fn dim_x(&self) -> usize {
        self.net.n_params()
    }

    fn dim_inner(&self) -> usize {
        1
    }

    fn sample_outer(&self, rng: &mut ChaCha8Rng) -> IvScenario {
        let z = (rng.random_range(-3.0..=3.0), rng.random_range(-3.0..=3.0));
        let e = self.spec.noise_e_std * rng.sample::<f64, _>(StandardNormal);
        let x = self.regressor(self.instrument_summary(z), e, rng);
        let delta = self.spec.noise_extra_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        IvScenario { y: self.spec.truth.eval(x) + e + delta, z, x_observed: x }
    }

    fn sample_inner(&self, outer: &IvScenario, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // Fresh shocks: conditionally on Z the redraws are independent of
        // the scenario's own regressor and response.
        let zbar = self.instrument_summary(outer.z);
        (0..m)
            .map(|_| {
                let e = self.spec.noise_e_std * rng.sample::<f64, _>(StandardNormal);
                self.regressor(zbar, e, rng)
            })
            .collect()
    }

    fn g_value(&self, x: &Array1<f64>, _outer: &IvScenario, inner: &f64) -> Array1<f64> {
        Array1::from_elem(1, self.h(x, *inner))
    }

    fn g_jacobian_t_apply(
        &self,
        x: &Array1<f64>,
        _outer: &IvScenario,
        inner: &f64,
        v: &Array1<f64>,
    ) -> Array1<f64> {
        let input = Array1::from_elem(1, *inner);
        let (_, grad) = self.net.scalar_output_grad(x, &input).expect("dims fixed at build");
        grad * v[0]
    }

    fn f_value(&self, outer: &IvScenario, u: &Array1<f64>) -> f64 {
        let r = outer.y - u[0];
        r * r
    }

    fn f_grad(&self, outer: &IvScenario, u: &Array1<f64>) -> Array1<f64> {
        Array1::from_elem(1, -2.0 * (outer.y - u[0]))
    }

    fn true_objective(&self, _x: &Array1<f64>) -> Option<f64> {
        None
    }

    fn smoothness(&self) -> SmoothnessClass {
        // Squared residual in the conditional mean: smooth outer map.
        SmoothnessClass::LipschitzSmooth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cso::{estimate_gradient, estimate_value};
    use crate::nn::fd_gradient_check;
    use crate::rng::seeded_rng;
    use crate::stats::mean;

    #[test]
    fn structural_functions_match_hand_values() {
        assert_eq!(IvTruth::Abs.eval(-2.0), 2.0);
        assert_eq!(IvTruth::Linear.eval(-2.0), -2.0);
        assert!((IvTruth::Sine.eval(std::f64::consts::FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert_eq!(IvTruth::Step.eval(-0.1), 0.0);
        assert_eq!(IvTruth::Step.eval(0.0), 1.0);
        assert_eq!(IvTruth::Step.eval(0.3), 1.0);
    }

    #[test]
    fn evaluation_grid_is_the_fixed_thousand_points() {
        let grid = IvProblem::test_grid();
        assert_eq!(grid.len(), 1000);
        assert!((grid[0] + 4.99).abs() < 1e-12);
        assert!((grid[999] - 5.0).abs() < 1e-12);
        assert!((grid[499] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_law_matches_the_generator() {
        let p = IvProblem::new(IvSpec::standard(IvTruth::Abs));
        let mut rng = seeded_rng(40);
        let mut zs = Vec::new();
        let mut xs = Vec::new();
        for _ in 0..4000 {
            let s = p.sample_outer(&mut rng);
            assert!((-3.0..=3.0).contains(&s.z.0) && (-3.0..=3.0).contains(&s.z.1));
            assert!(s.y.is_finite());
            zs.push(0.5 * (s.z.0 + s.z.1));
            xs.push(s.x_observed);
        }
        // X = zbar/2 + e/2 + gamma has mean 0 and correlates with zbar.
        let n = xs.len() as f64;
        assert!(mean(&xs).abs() < 4.0 * (0.25 * 3.0 + 0.25 + 0.1f64).sqrt() / n.sqrt());
        let c = crate::stats::pearson(&zs, &xs);
        assert!(c > 0.4, "instrument summary must drive the regressor, r = {c}");
    }

    #[test]
    fn inner_redraws_share_the_instrument_but_not_the_shock() {
        let p = IvProblem::new(IvSpec {
            noise_e_std: 0.0,
            noise_extra_var: 0.0,
            ..IvSpec::standard(IvTruth::Linear)
        });
        let mut rng = seeded_rng(41);
        let s = p.sample_outer(&mut rng);
        // Noise-free: every redraw collapses to half the instrument summary.
        for x in p.sample_inner(&s, 8, &mut rng) {
            assert!((x - 0.25 * (s.z.0 + s.z.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn first_instrument_mode_ignores_the_second_coordinate() {
        let p = IvProblem::new(IvSpec {
            z_first_only: true,
            noise_e_std: 0.0,
            noise_extra_var: 0.0,
            ..IvSpec::standard(IvTruth::Linear)
        });
        let mut rng = seeded_rng(42);
        let s = p.sample_outer(&mut rng);
        for x in p.sample_inner(&s, 8, &mut rng) {
            assert!((x - 0.5 * s.z.0).abs() < 1e-12);
        }
    }

    #[test]
    fn estimator_gradient_matches_finite_differences() {
        let p = IvProblem::new(IvSpec { net_dims: vec![1, 8, 1], ..IvSpec::standard(IvTruth::Sine) });
        let mut rng = seeded_rng(43);
        let s = p.sample_outer(&mut rng);
        let batch = p.sample_inner(&s, 6, &mut rng);
        let w = {
            use rand_distr::StandardNormal;
            let mut wr = seeded_rng(44);
            Array1::from_iter(
                (0..p.n_params()).map(|_| 0.4 * wr.sample::<f64, _>(StandardNormal)),
            )
        };
        let worst = fd_gradient_check(
            |pt| estimate_value(&p, pt, &s, &batch).unwrap(),
            |pt| estimate_gradient(&p, pt, &s, &batch).unwrap(),
            &w,
            1e-5,
        );
        assert!(worst < 1e-4, "estimator gradient vs finite differences: {worst:e}");
    }

    #[test]
    fn grid_mse_is_zero_exactly_when_the_net_reproduces_the_truth() {
        // A linear truth is representable: pass-through weights.
        let p = IvProblem::new(IvSpec { net_dims: vec![1, 2, 1], ..IvSpec::standard(IvTruth::Linear) });
        // h(x) = relu(x) - relu(-x) = x.
        let w = Array1::from(vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        assert!(p.grid_mse(&w) < 1e-28);
        let off = Array1::zeros(7);
        assert!(p.grid_mse(&off) > 1.0);
    }
}
