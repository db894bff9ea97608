//! Fully connected feed-forward networks with sigmoid hidden layers.
//!
//! A mini-batch is a matrix with one column per point, so each layer is a
//! matrix product `Z_l = W_l · A_{l−1}` followed by an element-wise
//! activation. Back-propagation visits layers in reverse and the weight
//! gradient is `E_l · A_{l−1}ᵀ / batch`.
//!
//! Parameters live in one flat row-major vector (layer by layer), which is
//! what the generic optimizers operate on.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelKind};
use crate::error::{check_dim, Error, Result};
use crate::optim::Objective;
use crate::rng;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Matrix with the given vectors as its columns.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            check_dim(rows, c.len())?;
            for (i, &v) in c.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        Ok(m)
    }

    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut r = rng::from_seed(seed);
        let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with a trailing row of ones.
    fn with_ones_row(&self) -> Self {
        let mut data = self.data.clone();
        data.resize(data.len() + self.cols, 1.0);
        Self {
            rows: self.rows + 1,
            cols: self.cols,
            data,
        }
    }
}

/// `C = A·B` by the textbook triple loop, `k` innermost.
pub fn gemm_naive(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_dim(a.cols, b.rows)?;
    let mut c = Matrix::zeros(a.rows, b.cols);
    naive_kernel(&a.data, a.rows, a.cols, &b.data, b.cols, &mut c.data);
    Ok(c)
}

/// `C = A·B` over square tiles of the `(i, j, k)` iteration space.
///
/// Tiles along `k` are visited in increasing order, so every element sees
/// the same summation order as [`gemm_naive`] and the results agree bitwise.
pub fn gemm_blocked(a: &Matrix, b: &Matrix, tile: usize) -> Result<Matrix> {
    check_dim(a.cols, b.rows)?;
    if tile == 0 {
        return Err(Error::invalid("tile size must be at least 1"));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    blocked_kernel(&a.data, a.rows, a.cols, &b.data, b.cols, tile, &mut c.data);
    Ok(c)
}

fn naive_kernel(a: &[f64], n: usize, m: usize, b: &[f64], p: usize, c: &mut [f64]) {
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * b[k * p + j];
            }
            c[i * p + j] = s;
        }
    }
}

fn blocked_kernel(a: &[f64], n: usize, m: usize, b: &[f64], p: usize, tile: usize, c: &mut [f64]) {
    c.iter_mut().for_each(|v| *v = 0.0);
    for i0 in (0..n).step_by(tile) {
        let i1 = (i0 + tile).min(n);
        for j0 in (0..p).step_by(tile) {
            let j1 = (j0 + tile).min(p);
            for k0 in (0..m).step_by(tile) {
                let k1 = (k0 + tile).min(m);
                for i in i0..i1 {
                    let crow = &mut c[i * p + j0..i * p + j1];
                    for k in k0..k1 {
                        let aik = a[i * m + k];
                        let brow = &b[k * p + j0..k * p + j1];
                        for (cv, bv) in crow.iter_mut().zip(brow) {
                            *cv += aik * bv;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// Softmax outputs with cross-entropy loss.
    SoftmaxCrossEntropy,
    /// Linear outputs with loss `½‖a − y‖²`.
    IdentityMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GemmKernel {
    Naive,
    Blocked { tile: usize },
}

impl Default for GemmKernel {
    fn default() -> Self {
        GemmKernel::Blocked { tile: 32 }
    }
}

impl GemmKernel {
    fn run(self, a: &[f64], n: usize, m: usize, b: &[f64], p: usize, c: &mut [f64]) {
        match self {
            GemmKernel::Naive => naive_kernel(a, n, m, b, p, c),
            GemmKernel::Blocked { tile } => blocked_kernel(a, n, m, b, p, tile.max(1), c),
        }
    }
}

/// Per-layer weighted inputs `z` and activations `a` for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Matrix,
    pub z: Vec<Matrix>,
    pub a: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.a.last().unwrap_or(&self.input)
    }

    pub fn batch_size(&self) -> usize {
        self.input.cols
    }
}

/// Per-layer error matrices `e_l = ∂C/∂z_l`, summed per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerErrors {
    pub e: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    head: OutputHead,
    bias: bool,
    #[serde(default)]
    kernel: GemmKernel,
    params: Vec<f64>,
}

pub const GRAD_CHECK_MAX_WEIGHTS: usize = 10_000;

impl Mlp {
    /// Weights drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new(layer_sizes: &[usize], head: OutputHead, bias: bool, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(
                "an MLP needs at least an input and an output layer, all non-empty",
            ));
        }
        let mut mlp = Self {
            layer_sizes: layer_sizes.to_vec(),
            head,
            bias,
            kernel: GemmKernel::default(),
            params: Vec::new(),
        };
        let mut r = rng::from_seed(seed);
        for l in 0..mlp.n_layers() {
            let (rows, cols) = mlp.shape(l);
            let bound = 1.0 / (cols as f64).sqrt();
            mlp.params
                .extend((0..rows * cols).map(|_| r.random_range(-bound..=bound)));
        }
        Ok(mlp)
    }

    /// Network with explicit per-layer weights, each `fan_out × fan_in(+1)`.
    pub fn from_weights(layer_sizes: &[usize], head: OutputHead, bias: bool, weights: &[Matrix]) -> Result<Self> {
        let mut mlp = Self::new(layer_sizes, head, bias, 0)?;
        check_dim(mlp.n_layers(), weights.len())?;
        let mut params = Vec::with_capacity(mlp.params.len());
        for (l, w) in weights.iter().enumerate() {
            let (rows, cols) = mlp.shape(l);
            if (w.rows, w.cols) != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    expected: rows * cols,
                    found: w.rows * w.cols,
                });
            }
            params.extend_from_slice(&w.data);
        }
        mlp.set_params(&params)?;
        Ok(mlp)
    }

    pub fn with_kernel(mut self, kernel: GemmKernel) -> Result<Self> {
        if kernel == (GemmKernel::Blocked { tile: 0 }) {
            return Err(Error::invalid("tile size must be at least 1"));
        }
        self.kernel = kernel;
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn kernel(&self) -> GemmKernel {
        self.kernel
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    /// Shape of `W_l` as `(fan_out, fan_in + bias)`.
    pub fn shape(&self, l: usize) -> (usize, usize) {
        (self.layer_sizes[l + 1], self.layer_sizes[l] + usize::from(self.bias))
    }

    pub fn n_params(&self) -> usize {
        (0..self.n_layers()).map(|l| self.shape(l).0 * self.shape(l).1).sum()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.n_params(), params.len())?;
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("network weights"));
        }
        self.params.clear();
        self.params.extend_from_slice(params);
        Ok(())
    }

    pub fn weights(&self, l: usize) -> Matrix {
        let (rows, cols) = self.shape(l);
        let off = self.offset(l);
        Matrix {
            rows,
            cols,
            data: self.params[off..off + rows * cols].to_vec(),
        }
    }

    fn offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.shape(k).0 * self.shape(k).1).sum()
    }

    fn layer<'a>(&self, params: &'a [f64], l: usize) -> &'a [f64] {
        let (rows, cols) = self.shape(l);
        let off = self.offset(l);
        &params[off..off + rows * cols]
    }

    fn layer_input(&self, a: &Matrix) -> Matrix {
        if self.bias {
            a.with_ones_row()
        } else {
            a.clone()
        }
    }

    /// Forward pass; `batch` is `n_inputs × batch_size`.
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardCache> {
        self.forward_with(&self.params, batch)
    }

    fn forward_with(&self, params: &[f64], batch: &Matrix) -> Result<ForwardCache> {
        check_dim(self.n_inputs(), batch.rows)?;
        let n = self.n_layers();
        let mut z = Vec::with_capacity(n);
        let mut a: Vec<Matrix> = Vec::with_capacity(n);
        for l in 0..n {
            let input = self.layer_input(if l == 0 { batch } else { &a[l - 1] });
            let (rows, cols) = self.shape(l);
            let mut zl = Matrix::zeros(rows, batch.cols);
            self.kernel
                .run(self.layer(params, l), rows, cols, &input.data, batch.cols, &mut zl.data);
            let al = if l + 1 == n {
                self.apply_head(&zl)
            } else {
                Matrix {
                    data: zl.data.iter().map(|&v| sigmoid(v)).collect(),
                    ..zl.clone()
                }
            };
            z.push(zl);
            a.push(al);
        }
        Ok(ForwardCache {
            input: batch.clone(),
            z,
            a,
        })
    }

    fn apply_head(&self, z: &Matrix) -> Matrix {
        match self.head {
            OutputHead::IdentityMse => z.clone(),
            OutputHead::SoftmaxCrossEntropy => {
                let mut out = Matrix::zeros(z.rows, z.cols);
                for j in 0..z.cols {
                    let lse = log_sum_exp((0..z.rows).map(|i| z.get(i, j)));
                    for i in 0..z.rows {
                        out.set(i, j, (z.get(i, j) - lse).exp());
                    }
                }
                out
            }
        }
    }

    /// Errors for every layer: `e_L = a_L − y` at the output, then
    /// `e_l = (W_{l+1}ᵀ e_{l+1}) ⊙ σ′(z_l)` in reverse layer order.
    pub fn backward(&self, cache: &ForwardCache, targets: &Matrix) -> Result<LayerErrors> {
        self.backward_with(&self.params, cache, targets)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let n = self.n_layers();
        if cache.z.len() != n || cache.a.len() != n {
            return Err(Error::invalid(format!(
                "forward cache holds {} of {n} layers",
                cache.z.len().min(cache.a.len())
            )));
        }
        check_dim(self.n_inputs(), cache.input.rows)?;
        for l in 0..n {
            let want = self.layer_sizes[l + 1] * cache.batch_size();
            check_dim(want, cache.z[l].data.len())?;
            check_dim(want, cache.a[l].data.len())?;
        }
        Ok(())
    }

    fn backward_with(&self, params: &[f64], cache: &ForwardCache, targets: &Matrix) -> Result<LayerErrors> {
        self.check_cache(cache)?;
        let out = cache.output();
        if (targets.rows, targets.cols) != (out.rows, out.cols) {
            return Err(Error::DimensionMismatch {
                expected: out.rows * out.cols,
                found: targets.rows * targets.cols,
            });
        }
        let n = self.n_layers();
        let batch = cache.batch_size();
        let mut e = vec![Matrix::zeros(0, 0); n];
        e[n - 1] = Matrix {
            data: out.data.iter().zip(&targets.data).map(|(a, y)| a - y).collect(),
            ..out.clone()
        };
        for l in (0..n - 1).rev() {
            let w = self.layer(params, l + 1);
            let (rows, cols) = self.shape(l + 1);
            let fan_in = self.layer_sizes[l + 1];
            let next = &e[l + 1];
            let mut el = Matrix::zeros(fan_in, batch);
            for r in 0..rows {
                for i in 0..fan_in {
                    let wri = w[r * cols + i];
                    for b in 0..batch {
                        el.data[i * batch + b] += wri * next.data[r * batch + b];
                    }
                }
            }
            for (ev, &zv) in el.data.iter_mut().zip(&cache.z[l].data) {
                let s = sigmoid(zv);
                *ev *= s * (1.0 - s);
            }
            e[l] = el;
        }
        Ok(LayerErrors { e })
    }

    /// `∂C/∂W_l = e_l · a_{l−1}ᵀ / batch` for every layer.
    pub fn weight_gradients(&self, cache: &ForwardCache, errors: &LayerErrors) -> Result<Vec<Matrix>> {
        self.check_cache(cache)?;
        check_dim(self.n_layers(), errors.e.len())?;
        let batch = cache.batch_size();
        let scale = 1.0 / batch as f64;
        let mut grads = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let input = self.layer_input(if l == 0 { &cache.input } else { &cache.a[l - 1] });
            let el = &errors.e[l];
            let (rows, cols) = self.shape(l);
            check_dim(rows * batch, el.data.len())?;
            let mut g = Matrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    let mut s = 0.0;
                    for b in 0..batch {
                        s += el.data[r * batch + b] * input.data[c * batch + b];
                    }
                    g.data[r * cols + c] = s * scale;
                }
            }
            grads.push(g);
        }
        Ok(grads)
    }

    /// Gradient of [`Mlp::loss`] with respect to the flat parameters.
    pub fn gradient(&self, batch: &Matrix, targets: &Matrix) -> Result<Vec<f64>> {
        self.gradient_with(&self.params, batch, targets)
    }

    fn gradient_with(&self, params: &[f64], batch: &Matrix, targets: &Matrix) -> Result<Vec<f64>> {
        let cache = self.forward_with(params, batch)?;
        let errors = self.backward_with(params, &cache, targets)?;
        Ok(self
            .weight_gradients(&cache, &errors)?
            .into_iter()
            .flat_map(Matrix::into_data)
            .collect())
    }

    /// Mean loss over the batch columns.
    pub fn loss(&self, batch: &Matrix, targets: &Matrix) -> Result<f64> {
        self.loss_with(&self.params, batch, targets)
    }

    fn loss_with(&self, params: &[f64], batch: &Matrix, targets: &Matrix) -> Result<f64> {
        let cache = self.forward_with(params, batch)?;
        let z = cache.z.last().ok_or(Error::EmptyInput)?;
        check_dim(z.rows * z.cols, targets.data.len())?;
        let mut total = 0.0;
        for j in 0..z.cols {
            total += match self.head {
                OutputHead::IdentityMse => {
                    0.5 * (0..z.rows)
                        .map(|i| (z.get(i, j) - targets.get(i, j)).powi(2))
                        .sum::<f64>()
                }
                OutputHead::SoftmaxCrossEntropy => {
                    let lse = log_sum_exp((0..z.rows).map(|i| z.get(i, j)));
                    -(0..z.rows)
                        .map(|i| targets.get(i, j) * (z.get(i, j) - lse))
                        .sum::<f64>()
                }
            };
        }
        Ok(total / z.cols as f64)
    }

    /// Index of the largest output; ties to the smaller index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let cache = self.forward(&Matrix::from_columns(&[x])?)?;
        let out = cache.output().column(0);
        Ok((1..out.len()).fold(0, |best, i| if out[i] > out[best] { i } else { best }))
    }

    /// Worst relative difference between the analytic gradient and central
    /// differences `(C(w+ε) − C(w−ε)) / 2ε` over all weights. Per weight
    /// the error is `|g − ĝ| / max(|g|, |ĝ|, GRAD_CHECK_FLOOR)`.
    pub fn grad_check(&self, batch: &Matrix, targets: &Matrix, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("perturbation must be positive, got {eps}")));
        }
        if self.n_params() > GRAD_CHECK_MAX_WEIGHTS {
            return Err(Error::invalid(format!(
                "gradient check limited to {GRAD_CHECK_MAX_WEIGHTS} weights, network has {}",
                self.n_params()
            )));
        }
        let analytic = self.gradient(batch, targets)?;
        let mut w = self.params.clone();
        let mut worst = 0.0f64;
        for i in 0..w.len() {
            let orig = w[i];
            w[i] = orig + eps;
            let up = self.loss_with(&w, batch, targets)?;
            w[i] = orig - eps;
            let down = self.loss_with(&w, batch, targets)?;
            w[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
        Ok(worst)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mlp: Self = serde_json::from_str(&text)?;
        let mut checked = Self::new(&mlp.layer_sizes, mlp.head, mlp.bias, 0)?.with_kernel(mlp.kernel)?;
        checked.set_params(&mlp.params)?;
        Ok(checked)
    }
}

/// Denominator floor for [`relative_error`], so that gradients which are
/// zero up to rounding do not report huge relative errors.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    crate::linear::sigmoid(v)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Features of the selected points as columns.
pub fn batch_matrix(data: &Dataset, indices: &[usize]) -> Result<Matrix> {
    let cols: Vec<&[f64]> = indices.iter().map(|&i| data.point(i)).collect();
    if cols.is_empty() {
        return Err(Error::EmptyInput);
    }
    Matrix::from_columns(&cols)
}

/// Targets of the selected points as columns: one-hot for classification,
/// a single row of values for regression.
pub fn target_matrix(data: &Dataset, indices: &[usize]) -> Result<Matrix> {
    match data.label_kind() {
        LabelKind::Classification => {
            let nc = data.n_classes();
            let mut m = Matrix::zeros(nc, indices.len());
            for (j, &i) in indices.iter().enumerate() {
                m.set(data.class(i), j, 1.0);
            }
            Ok(m)
        }
        LabelKind::Regression => Matrix::from_vec(1, indices.len(), indices.iter().map(|&i| data.target(i)).collect()),
    }
}

/// Adapter for the generic optimizers. Targets arrive as `f64`: a class
/// id for the softmax head, a value for the identity head.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    template: Mlp,
}

impl MlpObjective {
    pub fn new(template: Mlp) -> Self {
        Self { template }
    }

    pub fn template(&self) -> &Mlp {
        &self.template
    }

    fn target(&self, y: f64) -> Result<Matrix> {
        let n = self.template.n_outputs();
        match self.template.head {
            OutputHead::SoftmaxCrossEntropy => {
                if y < 0.0 || y.fract() != 0.0 || y as usize >= n {
                    return Err(Error::InvalidLabel {
                        label: y,
                        context: "softmax head (class id below output count)",
                    });
                }
                let mut t = Matrix::zeros(n, 1);
                t.data[y as usize] = 1.0;
                Ok(t)
            }
            OutputHead::IdentityMse => {
                if n != 1 {
                    return Err(Error::Unsupported("scalar targets need a single output"));
                }
                Ok(Matrix::from_vec(1, 1, vec![y])?)
            }
        }
    }
}

impl Objective for MlpObjective {
    fn n_params(&self, n_features: usize) -> usize {
        if n_features == self.template.n_inputs() {
            self.template.n_params()
        } else {
            // reported mismatch makes the optimizer reject the setup
            usize::MAX
        }
    }

    fn gradient(&self, w: &[f64], x: &[f64], y: f64, grad: &mut [f64]) -> Result<()> {
        let g = self
            .template
            .gradient_with(w, &Matrix::from_columns(&[x])?, &self.target(y)?)?;
        grad.copy_from_slice(&g);
        Ok(())
    }

    fn loss(&self, w: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.template
            .loss_with(w, &Matrix::from_columns(&[x])?, &self.target(y)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_weights(&[3, 3], OutputHead::IdentityMse, false, &[Matrix::identity(3)]).unwrap();
        let x = Matrix::random(3, 4, 1);
        assert_eq!(mlp.forward(&x).unwrap().output(), &x);
    }

    #[test]
    fn sigmoid_neuron_at_zero() {
        let one = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let mlp = Mlp::from_weights(&[1, 1, 1], OutputHead::IdentityMse, false, &[one.clone(), one]).unwrap();
        let c = mlp.forward(&Matrix::zeros(1, 1)).unwrap();
        assert_eq!(c.z[0].data(), &[0.0]);
        assert_eq!(c.a[0].data(), &[0.5]);
    }

    #[test]
    fn zero_output_error_propagates_zero() {
        let mlp = Mlp::new(&[3, 4, 2], OutputHead::IdentityMse, true, 2).unwrap();
        let x = Matrix::random(3, 5, 3);
        let c = mlp.forward(&x).unwrap();
        let e = mlp.backward(&c, &c.output().clone()).unwrap();
        assert!(e.e.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
        let g = mlp.weight_gradients(&c, &e).unwrap();
        assert!(g.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_linear_layer_error_and_gradient() {
        let w = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let mlp = Mlp::from_weights(&[1, 1], OutputHead::IdentityMse, false, &[w]).unwrap();
        let x = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let y = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let c = mlp.forward(&x).unwrap();
        let e = mlp.backward(&c, &y).unwrap();
        assert_eq!(e.e[0].data(), &[5.0]);
        assert_eq!(mlp.weight_gradients(&c, &e).unwrap()[0].data(), &[15.0]);
        assert!(mlp.grad_check(&x, &y, 1e-5).unwrap() <= 1e-9);
        assert!(mlp.grad_check(&x, &y, 0.0).is_err());
    }

    #[test]
    fn shape_and_cache_errors() {
        let mlp = Mlp::new(&[2, 3, 2], OutputHead::SoftmaxCrossEntropy, false, 1).unwrap();
        assert!(mlp.forward(&Matrix::zeros(3, 1)).is_err());
        let c = mlp.forward(&Matrix::zeros(2, 2)).unwrap();
        assert!(mlp.backward(&c, &Matrix::zeros(2, 3)).is_err());
        let partial = ForwardCache {
            z: c.z[..1].to_vec(),
            a: c.a[..1].to_vec(),
            ..c.clone()
        };
        assert!(mlp.backward(&partial, &Matrix::zeros(2, 2)).is_err());
        assert!(Mlp::new(&[2], OutputHead::IdentityMse, false, 0).is_err());
        assert!(gemm_naive(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).is_err());
        assert!(gemm_blocked(&Matrix::zeros(2, 3), &Matrix::zeros(3, 3), 0).is_err());
    }

    #[test]
    fn grad_check_guard() {
        let big = Mlp::new(&[100, 101], OutputHead::IdentityMse, false, 0).unwrap();
        assert!(big.n_params() > GRAD_CHECK_MAX_WEIGHTS);
        assert!(big
            .grad_check(&Matrix::zeros(100, 1), &Matrix::zeros(101, 1), 1e-5)
            .is_err());
    }

    #[test]
    fn two_hidden_layers_match_finite_differences() {
        for (head, bias) in [
            (OutputHead::SoftmaxCrossEntropy, false),
            (OutputHead::SoftmaxCrossEntropy, true),
            (OutputHead::IdentityMse, true),
        ] {
            let mlp = Mlp::new(&[4, 6, 5, 3], head, bias, 11).unwrap();
            let x = Matrix::random(4, 7, 12);
            let mut y = Matrix::zeros(3, 7);
            for j in 0..7 {
                y.set(j % 3, j, 1.0);
            }
            let err = mlp.grad_check(&x, &y, 1e-5).unwrap();
            assert!(err <= 1e-5, "{head:?} bias={bias}: {err}");
        }
    }

    #[test]
    fn gemm_examples() {
        let a = Matrix::random(64, 48, 1);
        let b = Matrix::random(48, 32, 2);
        let naive = gemm_naive(&a, &b).unwrap();
        for tile in [1, 4, 16, 64] {
            assert!(gemm_blocked(&a, &b, tile).unwrap().max_abs_diff(&naive) <= 1e-12);
        }
        assert_eq!(gemm_blocked(&a, &b, 64).unwrap(), naive);
        assert_eq!(gemm_blocked(&Matrix::identity(64), &a, 5).unwrap(), a);
    }

    #[test]
    fn blocked_forward_matches_naive() {
        let naive = Mlp::new(&[5, 8, 6, 3], OutputHead::SoftmaxCrossEntropy, true, 4)
            .unwrap()
            .with_kernel(GemmKernel::Naive)
            .unwrap();
        let blocked = naive.clone().with_kernel(GemmKernel::Blocked { tile: 3 }).unwrap();
        let x = Matrix::random(5, 9, 5);
        let (cn, cb) = (naive.forward(&x).unwrap(), blocked.forward(&x).unwrap());
        for l in 0..3 {
            assert!(cn.z[l].max_abs_diff(&cb.z[l]) <= 1e-12);
            assert!(cn.a[l].max_abs_diff(&cb.a[l]) <= 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let mlp = Mlp::new(&[2, 3, 2], OutputHead::SoftmaxCrossEntropy, true, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlp.json");
        mlp.save_json(&path).unwrap();
        assert_eq!(Mlp::load_json(&path).unwrap(), mlp);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn batch_forward_equals_columnwise(seed in 0u64..1000, batch in 1usize..6) {
            let mlp = Mlp::new(&[3, 4, 2], OutputHead::SoftmaxCrossEntropy, seed % 2 == 0, seed).unwrap();
            let x = Matrix::random(3, batch, seed + 1);
            let whole = mlp.forward(&x).unwrap();
            for j in 0..batch {
                let col = x.column(j);
                let single = mlp.forward(&Matrix::from_columns(&[&col]).unwrap()).unwrap();
                for l in 0..2 {
                    for i in 0..whole.a[l].rows() {
                        prop_assert!((whole.a[l].get(i, j) - single.a[l].get(i, 0)).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn blocked_gemm_any_tile(seed in 0u64..1000, n in 1usize..20, m in 1usize..20, p in 1usize..20, tile in 1usize..24) {
            let a = Matrix::random(n, m, seed);
            let b = Matrix::random(m, p, seed + 1);
            prop_assert_eq!(gemm_blocked(&a, &b, tile).unwrap(), gemm_naive(&a, &b).unwrap());
        }
    }
}
