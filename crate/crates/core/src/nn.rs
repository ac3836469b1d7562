//! A small dense network with ReLU hidden layers and an identity output
//! layer, stored as one flat weight vector so it can be the decision
//! variable of an optimization problem.
//!
//! Besides the usual forward pass and loss gradient, the network computes
//! exact Hessian-vector products of its squared-error loss by
//! forward-over-reverse differentiation: a tangent is pushed through the
//! forward pass and then through the backward pass. ReLU has zero second
//! derivative wherever it has a first one, so no curvature term appears at
//! the activations and the product is exact on the (full-measure) smooth
//! region.
//!
//! Flat layout: for each layer in order, the weight matrix in row-major
//! order (shape `n_out x n_in`), then the bias vector (`n_out`). The kink
//! convention for ReLU derivatives is `relu'(0) = 0`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("need at least an input and an output layer, got dims {0:?}")]
    TooFewLayers(Vec<usize>),
    #[error("layer dims must be positive, got {0:?}")]
    ZeroWidth(Vec<usize>),
    #[error("weight vector has {got} entries, architecture {dims:?} needs {want}")]
    WeightCount { dims: Vec<usize>, want: usize, got: usize },
    #[error("input has {got} columns, network expects {want}")]
    InputWidth { want: usize, got: usize },
    #[error("weights file is malformed: {0}")]
    BadFile(String),
}

/// Number of parameters a given architecture needs.
pub fn param_count(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Array1<f64>,
}

/// Borrowed per-layer views into a flat weight vector.
struct Layers<'a> {
    w: Vec<ArrayView2<'a, f64>>,
    b: Vec<ArrayView1<'a, f64>>,
}

fn split_layers<'a>(dims: &[usize], flat: &'a [f64]) -> Layers<'a> {
    let mut w = Vec::with_capacity(dims.len() - 1);
    let mut b = Vec::with_capacity(dims.len() - 1);
    let mut off = 0;
    for pair in dims.windows(2) {
        let (n_in, n_out) = (pair[0], pair[1]);
        w.push(ArrayView2::from_shape((n_out, n_in), &flat[off..off + n_out * n_in]).unwrap());
        off += n_out * n_in;
        b.push(ArrayView1::from(&flat[off..off + n_out]));
        off += n_out;
    }
    Layers { w, b }
}

fn relu_mask(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

impl Mlp {
    /// Wrap an existing flat weight vector.
    pub fn new(layer_dims: Vec<usize>, weights: Array1<f64>) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::TooFewLayers(layer_dims));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(NnError::ZeroWidth(layer_dims));
        }
        let want = param_count(&layer_dims);
        if weights.len() != want {
            return Err(NnError::WeightCount { dims: layer_dims, want, got: weights.len() });
        }
        Ok(Mlp { layer_dims, weights })
    }

    /// Seeded initialization: each layer's weights uniform in
    /// `[-sqrt(6/(n_in+n_out)), +sqrt(6/(n_in+n_out))]`, biases zero.
    /// Weights are drawn layer by layer in row-major order, so a seed pins
    /// the whole vector.
    pub fn seeded_init(layer_dims: Vec<usize>, seed: u64) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::TooFewLayers(layer_dims));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(NnError::ZeroWidth(layer_dims));
        }
        let mut rng = seeded_rng(seed);
        let mut flat = Vec::with_capacity(param_count(&layer_dims));
        for pair in layer_dims.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                flat.push(rng.random_range(-bound..=bound));
            }
            flat.extend(std::iter::repeat(0.0).take(n_out));
        }
        Ok(Mlp { layer_dims, weights: Array1::from(flat) })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn set_weights(&mut self, w: Array1<f64>) -> Result<(), NnError> {
        if w.len() != self.weights.len() {
            return Err(NnError::WeightCount {
                dims: self.layer_dims.clone(),
                want: self.weights.len(),
                got: w.len(),
            });
        }
        self.weights = w;
        Ok(())
    }

    fn check_input(&self, inputs: &Array2<f64>) -> Result<(), NnError> {
        if inputs.ncols() != self.in_dim() {
            return Err(NnError::InputWidth { want: self.in_dim(), got: inputs.ncols() });
        }
        Ok(())
    }

    fn check_weights<'a>(&self, w: &'a Array1<f64>) -> Result<&'a [f64], NnError> {
        let want = param_count(&self.layer_dims);
        if w.len() != want {
            return Err(NnError::WeightCount {
                dims: self.layer_dims.clone(),
                want,
                got: w.len(),
            });
        }
        Ok(w.as_slice().expect("flat weights are contiguous"))
    }

    /// Batched forward pass with the network's own weights. Rows are samples.
    pub fn forward(&self, inputs: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.forward_with(&self.weights, inputs)
    }

    /// Batched forward pass with an external flat weight vector.
    pub fn forward_with(
        &self,
        w: &Array1<f64>,
        inputs: &Array2<f64>,
    ) -> Result<Array2<f64>, NnError> {
        self.check_input(inputs)?;
        let flat = self.check_weights(w)?;
        let layers = split_layers(&self.layer_dims, flat);
        let n_layers = layers.w.len();
        let mut a = inputs.clone();
        for l in 0..n_layers {
            let mut z = a.dot(&layers.w[l].t());
            z += &layers.b[l];
            a = if l + 1 < n_layers { z.mapv(|v| v.max(0.0)) } else { z };
        }
        Ok(a)
    }

    /// Mean-over-batch squared error, summed over output coordinates.
    pub fn loss_with(
        &self,
        w: &Array1<f64>,
        inputs: &Array2<f64>,
        targets: &Array2<f64>,
    ) -> Result<f64, NnError> {
        let out = self.forward_with(w, inputs)?;
        let err = &out - targets;
        Ok(err.mapv(|e| e * e).sum() / inputs.nrows() as f64)
    }

    /// Loss and its gradient with respect to the flat weights.
    pub fn loss_grad_with(
        &self,
        w: &Array1<f64>,
        inputs: &Array2<f64>,
        targets: &Array2<f64>,
    ) -> Result<(f64, Array1<f64>), NnError> {
        let (loss, grad, _) = self.backprop(w, inputs, targets, None)?;
        Ok((loss, grad))
    }

    /// Exact Hessian-vector product of the loss at `w` in direction `v`.
    pub fn hvp_with(
        &self,
        w: &Array1<f64>,
        inputs: &Array2<f64>,
        targets: &Array2<f64>,
        v: &Array1<f64>,
    ) -> Result<Array1<f64>, NnError> {
        let (_, _, hvp) = self.backprop(w, inputs, targets, Some(v))?;
        Ok(hvp.expect("tangent requested"))
    }

    /// Value of the scalar output and its gradient with respect to the
    /// weights, for one input row. Only for single-output networks.
    pub fn scalar_output_grad(
        &self,
        w: &Array1<f64>,
        input: &Array1<f64>,
    ) -> Result<(f64, Array1<f64>), NnError> {
        assert_eq!(self.out_dim(), 1, "scalar_output_grad needs a single-output network");
        let flat = self.check_weights(w)?;
        let x = input
            .view()
            .into_shape_with_order((1, input.len()))
            .map_err(|_| NnError::InputWidth { want: self.in_dim(), got: input.len() })?
            .to_owned();
        self.check_input(&x)?;
        let layers = split_layers(&self.layer_dims, flat);
        let n_layers = layers.w.len();

        // Forward, keeping activations and pre-activation masks.
        let mut acts: Vec<Array2<f64>> = vec![x];
        let mut masks: Vec<Array2<f64>> = Vec::new();
        for l in 0..n_layers {
            let mut z = acts[l].dot(&layers.w[l].t());
            z += &layers.b[l];
            if l + 1 < n_layers {
                masks.push(relu_mask(&z));
                acts.push(z.mapv(|v| v.max(0.0)));
            } else {
                acts.push(z);
            }
        }
        let value = acts[n_layers][[0, 0]];

        // Backward with unit seed on the single output.
        let mut grad = Array1::zeros(w.len());
        let gs = grad.as_slice_mut().unwrap();
        let mut delta = Array2::from_elem((1, 1), 1.0);
        let mut off_end = w.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let dw = delta.t().dot(&acts[l]);
            let db = delta.sum_axis(Axis(0));
            let b_off = off_end - n_out;
            let w_off = b_off - n_in * n_out;
            for (dst, src) in gs[b_off..off_end].iter_mut().zip(db.iter()) {
                *dst = *src;
            }
            for (dst, src) in gs[w_off..b_off].iter_mut().zip(dw.iter()) {
                *dst = *src;
            }
            off_end = w_off;
            if l > 0 {
                delta = delta.dot(&layers.w[l]) * &masks[l - 1];
            }
        }
        Ok((value, grad))
    }

    /// Shared reverse pass. With `tangent = Some(v)` it also pushes the
    /// forward tangent in direction `v` through both passes and returns the
    /// Hessian-vector product.
    fn backprop(
        &self,
        w: &Array1<f64>,
        inputs: &Array2<f64>,
        targets: &Array2<f64>,
        tangent: Option<&Array1<f64>>,
    ) -> Result<(f64, Array1<f64>, Option<Array1<f64>>), NnError> {
        self.check_input(inputs)?;
        let flat = self.check_weights(w)?;
        if targets.nrows() != inputs.nrows() || targets.ncols() != self.out_dim() {
            return Err(NnError::InputWidth { want: self.out_dim(), got: targets.ncols() });
        }
        let layers = split_layers(&self.layer_dims, flat);
        let v_layers = match tangent {
            Some(v) => {
                let vf = self.check_weights(v)?;
                Some(split_layers(&self.layer_dims, vf))
            }
            None => None,
        };
        let n_layers = layers.w.len();
        let n = inputs.nrows() as f64;

        // Forward pass; with a tangent, also its directional derivative.
        let mut acts: Vec<Array2<f64>> = vec![inputs.clone()];
        let mut r_acts: Vec<Array2<f64>> =
            vec![Array2::zeros((inputs.nrows(), inputs.ncols()))];
        let mut masks: Vec<Array2<f64>> = Vec::new();
        for l in 0..n_layers {
            let mut z = acts[l].dot(&layers.w[l].t());
            z += &layers.b[l];
            if let Some(vl) = &v_layers {
                let mut rz = acts[l].dot(&vl.w[l].t()) + r_acts[l].dot(&layers.w[l].t());
                rz += &vl.b[l];
                if l + 1 < n_layers {
                    let mask = relu_mask(&z);
                    r_acts.push(&rz * &mask);
                    masks.push(mask);
                    acts.push(z.mapv(|v| v.max(0.0)));
                } else {
                    r_acts.push(rz);
                    acts.push(z);
                }
            } else if l + 1 < n_layers {
                masks.push(relu_mask(&z));
                acts.push(z.mapv(|v| v.max(0.0)));
            } else {
                acts.push(z);
            }
        }

        let err = &acts[n_layers] - targets;
        let loss = err.mapv(|e| e * e).sum() / n;

        let mut grad = Array1::zeros(w.len());
        let mut hvp = tangent.map(|_| Array1::zeros(w.len()));

        // delta_l = dLoss/dz_l, walked from the output layer down; with a
        // tangent, r_delta is its directional derivative. ReLU contributes
        // no curvature term (second derivative zero where defined).
        let mut delta = err.mapv(|e| 2.0 * e / n);
        let mut r_delta = v_layers.as_ref().map(|_| r_acts[n_layers].mapv(|e| 2.0 * e / n));
        let mut off_end = w.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let b_off = off_end - n_out;
            let w_off = b_off - n_in * n_out;
            {
                let dw = delta.t().dot(&acts[l]);
                let db = delta.sum_axis(Axis(0));
                let gs = grad.as_slice_mut().unwrap();
                for (dst, src) in gs[b_off..off_end].iter_mut().zip(db.iter()) {
                    *dst = *src;
                }
                for (dst, src) in gs[w_off..b_off].iter_mut().zip(dw.iter()) {
                    *dst = *src;
                }
            }
            if let (Some(h), Some(rd)) = (hvp.as_mut(), r_delta.as_ref()) {
                let r_dw = rd.t().dot(&acts[l]) + delta.t().dot(&r_acts[l]);
                let r_db = rd.sum_axis(Axis(0));
                let hs = h.as_slice_mut().unwrap();
                for (dst, src) in hs[b_off..off_end].iter_mut().zip(r_db.iter()) {
                    *dst = *src;
                }
                for (dst, src) in hs[w_off..b_off].iter_mut().zip(r_dw.iter()) {
                    *dst = *src;
                }
            }
            off_end = w_off;
            if l > 0 {
                if let (Some(rd), Some(vl)) = (r_delta.as_mut(), v_layers.as_ref()) {
                    *rd = (rd.dot(&layers.w[l]) + delta.dot(&vl.w[l])) * &masks[l - 1];
                }
                delta = delta.dot(&layers.w[l]) * &masks[l - 1];
            }
        }
        Ok((loss, grad, hvp))
    }

    /// Serialize as text: a header line with the layer dims, then one float
    /// per line with 17 significant digits (bit-faithful round trip).
    pub fn save_text(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        out.push_str("dims ");
        out.push_str(&dims.join(" "));
        out.push('\n');
        for v in self.weights.iter() {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    pub fn load_text(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| NnError::BadFile("empty file".into()))?;
        let dims: Vec<usize> = header
            .strip_prefix("dims ")
            .ok_or_else(|| NnError::BadFile(format!("expected `dims ...` header, got `{header}`")))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| NnError::BadFile(format!("bad dim `{t}`"))))
            .collect::<Result<_, _>>()?;
        let mut flat = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            flat.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| NnError::BadFile(format!("bad float on line {}", i + 2)))?,
            );
        }
        Mlp::new(dims, Array1::from(flat))
    }
}

/// Worst-case relative disagreement between an analytic gradient and a
/// central finite difference of `f`, probed coordinate by coordinate.
/// Differences are scaled by the largest gradient magnitude so near-zero
/// coordinates do not blow up the ratio.
pub fn fd_gradient_check<F, G>(mut f: F, grad_fn: G, x: &Array1<f64>, eps: f64) -> f64
where
    F: FnMut(&Array1<f64>) -> f64,
    G: FnOnce(&Array1<f64>) -> Array1<f64>,
{
    let analytic = grad_fn(x);
    let mut fd = Array1::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + eps;
        let up = f(&xp);
        xp[i] = xi - eps;
        let down = f(&xp);
        xp[i] = xi;
        fd[i] = (up - down) / (2.0 * eps);
    }
    let scale = analytic
        .iter()
        .chain(fd.iter())
        .fold(1e-12f64, |acc, v| acc.max(v.abs()));
    analytic
        .iter()
        .zip(fd.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs() / scale))
}
