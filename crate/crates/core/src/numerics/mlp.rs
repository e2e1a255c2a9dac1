//! Fully-connected network with tanh hidden layers and an identity output
//! layer, plus hand-derived reverse-mode gradients.
//!
//! Forward, for layers `l = 1..=L`:
//!
//! ```text
//! a_0 = x
//! z_l = W_l a_{l-1} + b_l
//! a_l = tanh(z_l)   for l < L
//! a_L = z_L         (identity output)
//! ```
//!
//! Backward starts from a caller-supplied gradient with respect to the
//! output `a_L` and applies the chain rule exactly; no autograd, no
//! approximation. `tanh'` is evaluated as `1 - a^2` from the cached
//! post-activations.

use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, CoreError, Result};

/// Row-major dense matrix (`rows` = outputs, `cols` = inputs).
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from row-major data; the length must equal `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                context: "Matrix::from_row_major",
                expected: format!("{} values", rows * cols),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    /// `y = W x`.
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
        }
    }

    /// `y = W^T d` — used to push deltas back through a layer.
    fn t_matvec(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (r, di) in d.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * di;
            }
        }
    }

    /// `W += d a^T` — accumulates an outer product into the matrix.
    fn add_outer(&mut self, d: &[f64], a: &[f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(a.len(), self.cols);
        for (r, di) in d.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, ai) in row.iter_mut().zip(a) {
                *w += di * ai;
            }
        }
    }
}

/// Parameters of a tanh MLP. `layer_sizes = [in, h1, ..., out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Builds a network with all parameters zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a network with weights drawn from `N(0, 1/fan_in)` and zero
    /// biases — the standard scaled-Gaussian initialization for tanh nets.
    pub fn random(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes)?;
        for w in &mut p.weights {
            let std = 1.0 / (w.cols as f64).sqrt();
            for v in &mut w.data {
                *v = std * crate::rng::standard_normal(rng);
            }
        }
        Ok(p)
    }

    /// Builds from explicit per-layer weight matrices and bias vectors.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::check_sizes(&layer_sizes)?;
        if weights.len() != layer_sizes.len() - 1 || biases.len() != layer_sizes.len() - 1 {
            return Err(CoreError::ShapeMismatch {
                context: "MlpParams::from_parts",
                expected: format!("{} layers", layer_sizes.len() - 1),
                actual: format!("{} weights / {} biases", weights.len(), biases.len()),
            });
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows != layer_sizes[l + 1]
                || w.cols != layer_sizes[l]
                || b.len() != layer_sizes[l + 1]
            {
                return Err(CoreError::ShapeMismatch {
                    context: "MlpParams::from_parts",
                    expected: format!("layer {}: {}x{}", l, layer_sizes[l + 1], layer_sizes[l]),
                    actual: format!("{}x{} / bias {}", w.rows, w.cols, b.len()),
                });
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
        })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(CoreError::InvalidArgument {
                context: "MlpParams",
                message: format!("layer_sizes must list >=2 nonzero sizes, got {layer_sizes:?}"),
            });
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Vec<f64> {
        &mut self.biases[layer]
    }

    /// Total number of scalar parameters: `sum(in*out + out)` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Serializes all parameters into one flat vector (per layer: row-major
    /// weights, then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }

    /// Overwrites all parameters from a flat vector in [`flatten`] order.
    ///
    /// [`flatten`]: MlpParams::flatten
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::ShapeMismatch {
                context: "MlpParams::assign_flat",
                expected: self.param_count().to_string(),
                actual: flat.len().to_string(),
            });
        }
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let nw = w.data.len();
            w.data.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            let nb = b.len();
            b.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
        Ok(())
    }
}

/// Per-layer activations recorded by [`mlp_forward`]; index 0 is the input.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.activations
    }
}

/// Gradients with the same shape as [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            weights: p
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += scale * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in &mut w.data {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    /// Same flat layout as [`MlpParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Runs the network on `x`, returning the output and the activation cache
/// needed by [`mlp_backward`].
pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    if x.len() != p.input_dim() {
        return Err(CoreError::ShapeMismatch {
            context: "mlp_forward",
            expected: p.input_dim().to_string(),
            actual: x.len().to_string(),
        });
    }
    let n_layers = p.weights.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(x.to_vec());
    for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
        let mut z = vec![0.0; w.rows];
        w.matvec(activations.last().unwrap(), &mut z);
        for (zi, bi) in z.iter_mut().zip(b) {
            *zi += bi;
        }
        if l + 1 < n_layers {
            for zi in &mut z {
                *zi = zi.tanh();
            }
        }
        activations.push(z);
    }
    let out = activations.last().unwrap().clone();
    ensure_finite(&out, "mlp_forward")?;
    Ok((out, ForwardCache { activations }))
}

/// Backpropagates `output_grad` (gradient of a scalar objective with respect
/// to the network output) through the cached forward pass.
///
/// Returns parameter gradients and the gradient with respect to the input.
pub fn mlp_backward(
    p: &MlpParams,
    cache: &ForwardCache,
    output_grad: &[f64],
) -> Result<(MlpGrads, Vec<f64>)> {
    if output_grad.len() != p.output_dim() {
        return Err(CoreError::ShapeMismatch {
            context: "mlp_backward",
            expected: p.output_dim().to_string(),
            actual: output_grad.len().to_string(),
        });
    }
    if cache.activations.len() != p.weights.len() + 1 {
        return Err(CoreError::ShapeMismatch {
            context: "mlp_backward",
            expected: format!("{} cached activations", p.weights.len() + 1),
            actual: cache.activations.len().to_string(),
        });
    }
    let mut grads = MlpGrads::zeros_like(p);
    // Output layer is identity, so the first delta is the output grad itself.
    let mut delta = output_grad.to_vec();
    for l in (0..p.weights.len()).rev() {
        let a_prev = &cache.activations[l];
        grads.weights[l].add_outer(&delta, a_prev);
        for (g, d) in grads.biases[l].iter_mut().zip(&delta) {
            *g += d;
        }
        let mut prev = vec![0.0; p.weights[l].cols];
        p.weights[l].t_matvec(&delta, &mut prev);
        if l > 0 {
            // a_prev is a tanh activation; tanh' = 1 - a^2.
            for (pi, ai) in prev.iter_mut().zip(a_prev) {
                *pi *= 1.0 - ai * ai;
            }
        }
        delta = prev;
    }
    Ok((grads, delta))
}
