//! Comparison methods: pooled empirical-risk minimization, the first-order
//! meta-gradient, two-stage least squares (plain and polynomial), and a
//! direct regression network that ignores the instruments.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cso::{estimate_gradient, estimate_value, CsoProblem};
use crate::nn::Mlp;
use crate::problems::maml::{MamlProblem, MamlTask, SupportPoint};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty {0} pool")]
    EmptyPool(&'static str),
    #[error("{stage} design matrix is rank deficient (pivot {pivot:e})")]
    RankDeficient { stage: &'static str, pivot: f64 },
    #[error("need more rows than columns in {stage} ({rows} rows, {cols} columns)")]
    TooFewRows { stage: &'static str, rows: usize, cols: usize },
    #[error("mismatched row counts: {0} vs {1}")]
    RowMismatch(usize, usize),
}

/// Frozen sample pools defining the empirical version of a nested
/// objective: `n` scenarios, each with its own `m`-sample inner pool.
pub struct SaaInstance<'a, P: CsoProblem> {
    problem: &'a P,
    outers: Vec<P::Outer>,
    inners: Vec<Vec<P::Inner>>,
}

impl<'a, P: CsoProblem> SaaInstance<'a, P> {
    /// Draw the pools once; they stay fixed for the instance's lifetime.
    pub fn draw(
        problem: &'a P,
        n: usize,
        m: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, BaselineError> {
        if n == 0 {
            return Err(BaselineError::EmptyPool("outer"));
        }
        if m == 0 {
            return Err(BaselineError::EmptyPool("inner"));
        }
        let mut outers = Vec::with_capacity(n);
        let mut inners = Vec::with_capacity(n);
        for _ in 0..n {
            let o = problem.sample_outer(rng);
            inners.push(problem.sample_inner(&o, m, rng));
            outers.push(o);
        }
        Ok(SaaInstance { problem, outers, inners })
    }

    pub fn n_outer(&self) -> usize {
        self.outers.len()
    }

    /// Total samples frozen into the pools, counted the same way the
    /// iterative solver counts its budget: one outer plus `m` inner per
    /// scenario.
    pub fn total_samples(&self) -> usize {
        self.outers.len() + self.inners.iter().map(Vec::len).sum::<usize>()
    }

    /// Empirical objective: scenario average of the plug-in values.
    pub fn objective(&self, x: &Array1<f64>) -> f64 {
        let mut total = 0.0;
        for (o, batch) in self.outers.iter().zip(&self.inners) {
            total += estimate_value(self.problem, x, o, batch).expect("frozen pools are nonempty");
        }
        total / self.outers.len() as f64
    }

    /// Full-pool gradient of the empirical objective.
    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut total = Array1::zeros(x.len());
        for (o, batch) in self.outers.iter().zip(&self.inners) {
            total +=
                &estimate_gradient(self.problem, x, o, batch).expect("frozen pools are nonempty");
        }
        total / self.outers.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SaaSolution {
    pub x: Array1<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Full-batch gradient descent with Armijo backtracking on the empirical
/// objective. Deterministic given the pools.
pub fn saa_solve<P: CsoProblem>(
    inst: &SaaInstance<'_, P>,
    x0: &Array1<f64>,
    tol: f64,
    max_iters: usize,
) -> SaaSolution {
    let mut x = x0.clone();
    let mut fx = inst.objective(&x);
    let mut step = 1.0f64;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iters {
        let g = inst.gradient(&x);
        grad_norm = g.dot(&g).sqrt();
        if grad_norm <= tol {
            return SaaSolution { x, objective: fx, grad_norm, iterations, converged: true };
        }
        // Armijo: halve until f(x - s g) <= f(x) - 1e-4 s |g|^2; grow the
        // opening guess so progress is not capped by one early collapse.
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x - &(&g * step);
            let fc = inst.objective(&cand);
            if fc.is_finite() && fc <= fx - 1e-4 * step * grad_norm * grad_norm {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No descent direction step survived: stationary to float
            // precision or a separable-direction plateau. Report as is.
            break;
        }
    }
    let converged = grad_norm <= tol;
    SaaSolution { x, objective: fx, grad_norm, iterations, converged }
}

/// Meta-gradient with the adaptation Jacobian replaced by the identity:
/// the query gradient at the adapted weights, nothing more.
pub fn fo_maml_gradient(
    problem: &MamlProblem,
    w: &Array1<f64>,
    task: &MamlTask,
    support: &[SupportPoint],
) -> Array1<f64> {
    let adapted = problem.adapt(w, support);
    problem.f_grad(task, &adapted)
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    /// Fraction of regressor variance the first stage explained
    /// (instrument strength; near zero means the instruments carry no
    /// signal).
    pub stage1_r2: f64,
    pub weak_instruments: bool,
}

impl LinearModel {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.coefficients[0] * x
    }
}

/// Solve `(A^T A + lambda I) b = A^T y` by Cholesky. `lambda = 0` is plain
/// least squares; the intercept column is never penalized (its index is 0
/// by construction below).
fn ridge_normal_solve(
    a: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    stage: &'static str,
) -> Result<Array1<f64>, BaselineError> {
    let (n, p) = a.dim();
    if n <= p {
        return Err(BaselineError::TooFewRows { stage, rows: n, cols: p });
    }
    let mut gram = a.t().dot(a);
    for j in 1..p {
        gram[(j, j)] += lambda;
    }
    let rhs = a.t().dot(y);
    // Cholesky with a relative pivot floor: diagonal pivots of the Gram
    // matrix scale with squared column norms.
    let scale = (0..p).map(|j| gram[(j, j)]).fold(0.0f64, f64::max).max(1.0);
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-10 * scale {
            return Err(BaselineError::RankDeficient { stage, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..p {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    // Forward then backward substitution.
    let mut z = Array1::<f64>::zeros(p);
    for i in 0..p {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    let mut b = Array1::<f64>::zeros(p);
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    Ok(b)
}

fn with_intercept(cols: &[&Array1<f64>]) -> Array2<f64> {
    let n = cols.first().map(|c| c.len()).unwrap_or(0);
    let mut a = Array2::ones((n, cols.len() + 1));
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            a[(i, j + 1)] = c[i];
        }
    }
    a
}

fn r_squared(y: &Array1<f64>, fitted: &Array1<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(v, f)| (v - f) * (v - f)).sum();
    if ss_tot <= 0.0 {
        return 0.0;
    }
    1.0 - ss_res / ss_tot
}

/// Two-stage least squares with scalar regressor and two instruments:
/// regress X on [1, Z] to get fitted X̂, then Y on [1, X̂].
pub fn two_sls_fit(
    x: &Array1<f64>,
    z: &Array2<f64>,
    y: &Array1<f64>,
) -> Result<LinearModel, BaselineError> {
    let n = x.len();
    if n != z.nrows() || n != y.len() {
        return Err(BaselineError::RowMismatch(n, z.nrows().max(y.len())));
    }
    let z_cols: Vec<Array1<f64>> = (0..z.ncols()).map(|j| z.column(j).to_owned()).collect();
    let z_refs: Vec<&Array1<f64>> = z_cols.iter().collect();
    let a1 = with_intercept(&z_refs);
    let b1 = ridge_normal_solve(&a1, x, 0.0, "first-stage")?;
    let x_hat = a1.dot(&b1);
    let stage1_r2 = r_squared(x, &x_hat);
    let a2 = with_intercept(&[&x_hat]);
    let b2 = ridge_normal_solve(&a2, y, 0.0, "second-stage")?;
    Ok(LinearModel {
        coefficients: Array1::from(vec![b2[1]]),
        intercept: b2[0],
        stage1_r2,
        weak_instruments: stage1_r2 < 0.01,
    })
}

/// A fitted polynomial map `x -> intercept + sum_k coef[k] x^(k+1)`.
#[derive(Debug, Clone)]
pub struct PolyModel {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub degree: usize,
    pub ridge_lambda: f64,
    pub stage1_r2: f64,
}

impl PolyModel {
    pub fn predict(&self, x: f64) -> f64 {
        let mut acc = self.intercept;
        let mut p = 1.0;
        for c in self.coefficients.iter() {
            p *= x;
            acc += c * p;
        }
        acc
    }
}

fn poly_columns(v: &Array1<f64>, degree: usize) -> Vec<Array1<f64>> {
    (1..=degree).map(|d| v.mapv(|t| t.powi(d as i32))).collect()
}

/// Both stages on polynomial feature expansions, each solved by
/// ridge-regularized normal equations. Stage one fits the regressor from
/// all monomials of both instruments up to `degree`; stage two fits the
/// response from monomials of the fitted regressor.
pub fn poly_two_sls_fit(
    x: &Array1<f64>,
    z: &Array2<f64>,
    y: &Array1<f64>,
    degree: usize,
    ridge_lambda: f64,
) -> Result<PolyModel, BaselineError> {
    assert!(degree >= 1);
    let n = x.len();
    if n != z.nrows() || n != y.len() {
        return Err(BaselineError::RowMismatch(n, z.nrows().max(y.len())));
    }
    let mut cols: Vec<Array1<f64>> = Vec::new();
    for j in 0..z.ncols() {
        cols.extend(poly_columns(&z.column(j).to_owned(), degree));
    }
    let refs: Vec<&Array1<f64>> = cols.iter().collect();
    let a1 = with_intercept(&refs);
    let b1 = ridge_normal_solve(&a1, x, ridge_lambda, "first-stage")?;
    let x_hat = a1.dot(&b1);
    let stage1_r2 = r_squared(x, &x_hat);
    let x_cols = poly_columns(&x_hat, degree);
    let x_refs: Vec<&Array1<f64>> = x_cols.iter().collect();
    let a2 = with_intercept(&x_refs);
    let b2 = ridge_normal_solve(&a2, y, ridge_lambda, "second-stage")?;
    Ok(PolyModel {
        coefficients: b2.slice(ndarray::s![1..]).to_owned(),
        intercept: b2[0],
        degree,
        ridge_lambda,
        stage1_r2,
    })
}

/// Pick `(degree, lambda)` by mean squared error on a 20% holdout tail,
/// then refit on everything. Grids are fixed and recorded by the caller.
pub fn poly_two_sls_select(
    x: &Array1<f64>,
    z: &Array2<f64>,
    y: &Array1<f64>,
    degrees: &[usize],
    lambdas: &[f64],
) -> Result<PolyModel, BaselineError> {
    let n = x.len();
    let split = (n * 4) / 5;
    if split == 0 || split == n {
        return Err(BaselineError::TooFewRows { stage: "holdout", rows: n, cols: 5 });
    }
    let (xt, xv) = (x.slice(ndarray::s![..split]).to_owned(), x.slice(ndarray::s![split..]));
    let zt = z.slice(ndarray::s![..split, ..]).to_owned();
    let yt = y.slice(ndarray::s![..split]).to_owned();
    let yv = y.slice(ndarray::s![split..]);
    let mut best: Option<(f64, usize, f64)> = None;
    for &d in degrees {
        for &lam in lambdas {
            let Ok(model) = poly_two_sls_fit(&xt, &zt, &yt, d, lam) else { continue };
            let mse = xv
                .iter()
                .zip(yv.iter())
                .map(|(&xi, &yi)| {
                    let r = yi - model.predict(xi);
                    r * r
                })
                .sum::<f64>()
                / xv.len() as f64;
            if best.map(|(b, _, _)| mse < b).unwrap_or(true) {
                best = Some((mse, d, lam));
            }
        }
    }
    let (_, d, lam) = best.ok_or(BaselineError::RankDeficient {
        stage: "holdout-selection",
        pivot: 0.0,
    })?;
    poly_two_sls_fit(x, z, y, d, lam)
}

/// Plain SGD on mean squared error, predicting the response directly from
/// the observed regressor — the instruments are deliberately unused.
pub fn direct_nn_fit(
    x: &Array1<f64>,
    y: &Array1<f64>,
    net_dims: &[usize],
    epochs: usize,
    lr: f64,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Mlp, Array1<f64>), BaselineError> {
    let n = x.len();
    if n == 0 {
        return Err(BaselineError::EmptyPool("training"));
    }
    if n != y.len() {
        return Err(BaselineError::RowMismatch(n, y.len()));
    }
    let net = Mlp::seeded_init(net_dims.to_vec(), rng.random()).expect("valid architecture");
    let mut w = net.weights().to_owned();
    let batch = batch.max(1).min(n);
    for _ in 0..epochs {
        let steps = n.div_ceil(batch);
        for _ in 0..steps {
            let mut xs = Array2::zeros((batch, 1));
            let mut ys = Array2::zeros((batch, 1));
            for b in 0..batch {
                let i = rng.random_range(0..n);
                xs[(b, 0)] = x[i];
                ys[(b, 0)] = y[i];
            }
            let (_, g) = net.loss_grad_with(&w, &xs, &ys).expect("dims fixed at build");
            w -= &(g * lr);
        }
    }
    Ok((net, w))
}

/// Mean squared error of an arbitrary scalar predictor against a truth
/// function over a grid.
pub fn test_mse(predict: impl Fn(f64) -> f64, truth: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    assert!(!grid.is_empty());
    let mut total = 0.0;
    for &x in grid {
        let r = predict(x) - truth(x);
        total += r * r;
    }
    total / grid.len() as f64
}
