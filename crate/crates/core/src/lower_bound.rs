//! Hard one-dimensional instances and the biased function-value oracle
//! used to exhibit an optimization-error floor.
//!
//! The oracle adds a single Gaussian draw `xi ~ N(B, V)` to both the value
//! and the gradient, signed by the hidden instance parameter `v`:
//!
//! ```text
//!     h(x, xi) = F_v(x) + x * v * xi,      G(x, xi) = F_v'(x) + v * xi.
//! ```
//!
//! `G` is the pathwise derivative of `h`, the value bias is `B * |x|` (at
//! most `B` on the unit-diameter domain), and the gradient variance is
//! `V`. When the separation `alpha - B` falls to the scale of `sqrt(V/T)`,
//! no method that sees `T` draws can reliably tell `v = +1` from
//! `v = -1`, and the error of a tuned method stops improving — the floor
//! the sweep experiment measures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::rng::{derive_seed, seeded_rng};
use crate::stats::{mean, std_err};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardVariant {
    /// `F_v(x) = alpha * |x - v|`, minimized at `v`.
    ConvexAbs,
    /// `F_v(x) = (x - v*alpha)^2 / 2 + (alpha/2) * |x - v*alpha|`,
    /// minimized at `v * alpha`.
    StronglyConvex,
}

#[derive(Debug, Clone, Copy)]
pub struct HardInstance {
    pub variant: HardVariant,
    /// Hidden sign, `+1` or `-1`.
    pub v: f64,
    pub alpha: f64,
}

/// Sign with the kink convention `0 -> 0`, so the subgradient at a kink is
/// the midpoint choice.
fn kink_sign(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.signum()
    }
}

impl HardInstance {
    pub fn new(variant: HardVariant, v: f64, alpha: f64) -> Self {
        assert!(v == 1.0 || v == -1.0, "hidden sign must be +1 or -1");
        assert!(alpha > 0.0);
        HardInstance { variant, v, alpha }
    }

    pub fn minimizer(&self) -> f64 {
        match self.variant {
            HardVariant::ConvexAbs => self.v,
            HardVariant::StronglyConvex => self.v * self.alpha,
        }
    }

    /// Exact value and a subgradient.
    pub fn value_grad(&self, x: f64) -> (f64, f64) {
        match self.variant {
            HardVariant::ConvexAbs => {
                let t = x - self.v;
                (self.alpha * t.abs(), self.alpha * kink_sign(t))
            }
            HardVariant::StronglyConvex => {
                let t = x - self.v * self.alpha;
                (0.5 * t * t + 0.5 * self.alpha * t.abs(), t + 0.5 * self.alpha * kink_sign(t))
            }
        }
    }

    /// Best value on the half-line of the wrong sign, `{x : x * v <= 0}`,
    /// minus the optimum: `alpha` for the absolute family, `alpha^2` for
    /// the strongly convex one. This gap is what an algorithm pays for
    /// guessing `v` wrong.
    pub fn wrong_side_gap(&self) -> f64 {
        match self.variant {
            HardVariant::ConvexAbs => self.alpha,
            HardVariant::StronglyConvex => self.alpha * self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    /// Bias scale: the value estimate is off by `B * |x|` in expectation.
    pub bias: f64,
    /// Variance of the shared noise draw.
    pub variance: f64,
}

impl OracleParams {
    pub fn new(bias: f64, variance: f64) -> Self {
        assert!(bias >= 0.0 && variance > 0.0);
        OracleParams { bias, variance }
    }
}

/// One oracle query: a single `xi ~ N(B, V)` feeds both returned numbers,
/// so the gradient is exactly the derivative of the returned value in `x`.
pub fn oracle_query(
    inst: &HardInstance,
    x: f64,
    params: &OracleParams,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let xi = params.bias + params.variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let (value, grad) = inst.value_grad(x);
    (value + x * inst.v * xi, grad + inst.v * xi)
}

/// The smallest separation at which the two signed instances stay
/// information-theoretically confusable after `t` queries; sweeps use
/// multiples of it (or of `b` directly).
pub fn minimal_alpha(b: f64, variance: f64, t: usize) -> f64 {
    b + 0.5 * (variance / t as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct FloorCase {
    pub bias: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FloorRow {
    pub bias: f64,
    pub alpha: f64,
    /// Grid stepsize that minimized the mean error — tuning is optimistic
    /// for the algorithm, so any remaining floor is not a tuning artifact.
    pub best_step: f64,
    pub mean_error: f64,
    pub std_err: f64,
}

/// Projected subgradient descent on `[-1, 1]` driven by oracle gradients;
/// returns the error of the averaged iterate.
fn pgd_error(
    inst: &HardInstance,
    params: &OracleParams,
    t: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut x = 0.0f64;
    let mut sum = 0.0;
    for _ in 0..t {
        sum += x;
        let (_, g) = oracle_query(inst, x, params, rng);
        x = (x - gamma * g).clamp(-1.0, 1.0);
    }
    let avg = sum / t as f64;
    inst.value_grad(avg).0
}

/// Error-versus-bias sweep. For every `(B, alpha)` case the experiment
/// runs both hidden signs across `n_seeds` seeds and the whole stepsize
/// grid, keeps the grid's best mean error, and reports it with a standard
/// error. Noise paths are shared across cases and stepsizes (the seed
/// depends only on the seed index and the sign), so case-to-case
/// comparisons are paired.
pub fn floor_experiment(
    variant: HardVariant,
    cases: &[FloorCase],
    variance: f64,
    t: usize,
    n_seeds: usize,
    step_grid: &[f64],
    root_seed: u64,
) -> Vec<FloorRow> {
    assert!(t >= 1 && n_seeds >= 1 && !step_grid.is_empty());
    let mut rows = Vec::with_capacity(cases.len());
    for case in cases {
        let inst_pair = [
            HardInstance::new(variant, 1.0, case.alpha),
            HardInstance::new(variant, -1.0, case.alpha),
        ];
        let params = OracleParams::new(case.bias, variance);
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for &gamma in step_grid {
            let mut errors = Vec::with_capacity(2 * n_seeds);
            for seed_idx in 0..n_seeds {
                for (v_idx, inst) in inst_pair.iter().enumerate() {
                    let mut rng =
                        seeded_rng(derive_seed(root_seed, &[seed_idx as u64, v_idx as u64]));
                    errors.push(pgd_error(inst, &params, t, gamma, &mut rng));
                }
            }
            let m = mean(&errors);
            if best.as_ref().map(|(b, _, _)| m < *b).unwrap_or(true) {
                best = Some((m, gamma, errors));
            }
        }
        let (mean_error, best_step, errors) = best.expect("nonempty grid");
        rows.push(FloorRow {
            bias: case.bias,
            alpha: case.alpha,
            best_step,
            mean_error,
            std_err: std_err(&errors),
        });
    }
    rows
}
