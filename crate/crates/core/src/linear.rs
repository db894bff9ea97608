//! Logistic regression and linear SVM (hinge loss), trained in the primal.
//!
//! A batch update has two phases: one pass over the batch accumulating
//! the mean gradient from one inner product per point, then one pass over
//! the weights applying decay and the step. [`joint_batch_pass`] runs the
//! first phase for several models while touching each training point once.
//!
//! Label conventions: logistic uses `y ∈ {0, 1}`, hinge uses `y ∈ {−1, +1}`.
//! Dataset class ids 0/1 map to these through [`LossKind::target_for_class`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::optim::{apply_update, Objective, UpdateRuleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    Hinge,
}

impl LossKind {
    pub fn validate_label(self, y: f64) -> Result<()> {
        let ok = match self {
            LossKind::Logistic => y == 0.0 || y == 1.0,
            LossKind::Hinge => y == -1.0 || y == 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                label: y,
                context: match self {
                    LossKind::Logistic => "logistic loss (expects 0 or 1)",
                    LossKind::Hinge => "hinge loss (expects -1 or +1)",
                },
            })
        }
    }

    /// Maps binary class id 0/1 onto this loss's label convention.
    pub fn target_for_class(self, class: usize) -> Result<f64> {
        match (self, class) {
            (LossKind::Logistic, 0) => Ok(0.0),
            (LossKind::Logistic, 1) => Ok(1.0),
            (LossKind::Hinge, 0) => Ok(-1.0),
            (LossKind::Hinge, 1) => Ok(1.0),
            _ => Err(Error::InvalidLabel {
                label: class as f64,
                context: "binary linear model (class ids 0 or 1)",
            }),
        }
    }

    /// `f'(p)` such that the per-point gradient is `f'(p)·x`.
    #[inline]
    fn derivative(self, p: f64, y: f64) -> f64 {
        match self {
            LossKind::Logistic => sigmoid(p) - y,
            // subgradient 0 at the kink y·p = 1
            LossKind::Hinge => {
                if y * p < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    fn value(self, p: f64, y: f64) -> f64 {
        match self {
            // -[y ln σ(p) + (1-y) ln(1-σ(p))] written in overflow-safe form
            LossKind::Logistic => softplus(p) - y * p,
            LossKind::Hinge => (1.0 - y * p).max(0.0),
        }
    }
}

#[inline]
pub fn sigmoid(p: f64) -> f64 {
    if p >= 0.0 {
        1.0 / (1.0 + (-p).exp())
    } else {
        let e = p.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(p: f64) -> f64 {
    p.max(0.0) + (-p.abs()).exp().ln_1p()
}

/// Hyperplane model. With a bias, parameters are laid out as
/// `[weights..., bias]` and the bias acts as a constant-1 feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub loss: LossKind,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
}

impl LinearModel {
    pub fn zeros(loss: LossKind, n_features: usize) -> Self {
        Self {
            loss,
            weights: vec![0.0; n_features],
            bias: None,
        }
    }

    pub fn with_bias(mut self, bias: f64) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + usize::from(self.bias.is_some())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend(self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.n_params(), params.len())?;
        let d = self.weights.len();
        self.weights.copy_from_slice(&params[..d]);
        if let Some(b) = self.bias.as_mut() {
            *b = params[d];
        }
        Ok(())
    }

    #[inline]
    pub fn inner(&self, x: &[f64]) -> f64 {
        inner(&self.weights, self.bias, x)
    }

    pub fn loss_at(&self, x: &[f64], y: f64) -> Result<f64> {
        check_dim(self.n_features(), x.len())?;
        self.loss.validate_label(y)?;
        Ok(self.loss.value(self.inner(x), y))
    }

    /// Logistic: `(σ(p) − y)·x`. Hinge: `−y·x` when `y·p < 1`, else zero.
    pub fn point_gradient(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.n_params()];
        self.point_gradient_into(x, y, &mut g)?;
        Ok(g)
    }

    fn point_gradient_into(&self, x: &[f64], y: f64, g: &mut [f64]) -> Result<()> {
        check_dim(self.n_features(), x.len())?;
        self.loss.validate_label(y)?;
        let d = self.loss.derivative(self.inner(x), y);
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = d * xi;
        }
        if self.bias.is_some() {
            g[self.weights.len()] = d;
        }
        Ok(())
    }

    /// Worst per-parameter relative error between [`Self::point_gradient`]
    /// and central differences of the loss, measured as in
    /// [`crate::nn::relative_error`].
    pub fn grad_check(&self, x: &[f64], y: f64, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("perturbation must be positive, got {eps}")));
        }
        let analytic = self.point_gradient(x, y)?;
        let mut probe = self.clone();
        let mut params = self.params();
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + eps;
            probe.set_params(&params)?;
            let up = probe.loss_at(x, y)?;
            params[i] = orig - eps;
            probe.set_params(&params)?;
            let down = probe.loss_at(x, y)?;
            params[i] = orig;
            worst = worst.max(crate::nn::relative_error(analytic[i], (up - down) / (2.0 * eps)));
        }
        Ok(worst)
    }

    /// Logistic: class 1 iff σ(p) ≥ 0.5, returned as 0/1.
    /// Hinge: +1 iff p ≥ 0, returned as ±1.
    pub fn predict(&self, x: &[f64]) -> Result<i32> {
        check_dim(self.n_features(), x.len())?;
        let positive = self.inner(x) >= 0.0;
        Ok(match (self.loss, positive) {
            (LossKind::Logistic, true) => 1,
            (LossKind::Logistic, false) => 0,
            (LossKind::Hinge, true) => 1,
            (LossKind::Hinge, false) => -1,
        })
    }

    /// Prediction as a binary class id 0/1.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        check_dim(self.n_features(), x.len())?;
        Ok(usize::from(self.inner(x) >= 0.0))
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let ids = data.require_classification()?;
        let mut correct = 0;
        for (i, &c) in ids.iter().enumerate() {
            correct += usize::from(self.predict_class(data.point(i))? == c);
        }
        Ok(correct as f64 / data.n_points() as f64)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.weights.iter().chain(&model.bias).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(model)
    }
}

#[inline]
fn inner(weights: &[f64], bias: Option<f64>, x: &[f64]) -> f64 {
    let mut p = 0.0;
    for (w, xi) in weights.iter().zip(x) {
        p += w * xi;
    }
    p + bias.unwrap_or(0.0)
}

/// Gradient pass for one model: mean gradient over `batch`, with the
/// number of point loads and scalar multiplies it performed.
pub fn batch_gradient(model: &LinearModel, data: &Dataset, batch: &[usize]) -> Result<(Vec<f64>, u64, u64)> {
    check_dim(model.n_features(), data.n_features())?;
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ids = data.require_classification()?;
    let d = model.n_features();
    let mut g = vec![0.0; model.n_params()];
    for &t in batch {
        let x = data.point(t);
        let y = model.loss.target_for_class(ids[t])?;
        let f = model.loss.derivative(model.inner(x), y);
        for (gi, xi) in g[..d].iter_mut().zip(x) {
            *gi += f * xi;
        }
        if model.bias.is_some() {
            g[d] += f;
        }
    }
    let n = batch.len() as f64;
    g.iter_mut().for_each(|gi| *gi /= n);
    Ok((g, batch.len() as u64, (batch.len() * d) as u64))
}

/// One mini-batch step: mean gradient over the batch, then decay and the
/// optimizer rule applied to every parameter.
pub fn batch_update(
    model: &mut LinearModel,
    data: &Dataset,
    batch: &[usize],
    step_size: f64,
    weight_decay: f64,
    state: &mut UpdateRuleState,
) -> Result<()> {
    let (g, _, _) = batch_gradient(model, data, batch)?;
    let mut params = model.params();
    apply_update(state, &mut params, &g, step_size, weight_decay)?;
    model.set_params(&params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPassReport {
    pub gradients: Vec<Vec<f64>>,
    pub point_loads: u64,
    pub scalar_mults: u64,
}

/// Gradient phase for several models in a single traversal of the batch.
///
/// Each point's features are read once; feature `i` is multiplied into
/// every model's inner product before moving on to feature `i + 1`. Per
/// model the summation order matches [`batch_gradient`], so the resulting
/// gradients are bitwise identical to separate passes.
pub fn joint_batch_pass(models: &[LinearModel], data: &Dataset, batch: &[usize]) -> Result<JointPassReport> {
    if models.is_empty() {
        return Err(Error::invalid("joint pass needs at least one model"));
    }
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = data.n_features();
    for m in models {
        check_dim(d, m.n_features())?;
    }
    let ids = data.require_classification()?;
    let mut grads: Vec<Vec<f64>> = models.iter().map(|m| vec![0.0; m.n_params()]).collect();
    let mut p = vec![0.0; models.len()];
    let mut scalar_mults = 0u64;

    for &t in batch {
        let x = data.point(t);
        p.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (pm, m) in p.iter_mut().zip(models) {
                *pm += m.weights[i] * xi;
            }
        }
        scalar_mults += (d * models.len()) as u64;
        for ((m, g), &pm) in models.iter().zip(grads.iter_mut()).zip(&p) {
            let y = m.loss.target_for_class(ids[t])?;
            let f = m.loss.derivative(pm + m.bias.unwrap_or(0.0), y);
            for (gi, xi) in g[..d].iter_mut().zip(x) {
                *gi += f * xi;
            }
            if m.bias.is_some() {
                g[d] += f;
            }
        }
    }
    let n = batch.len() as f64;
    for g in &mut grads {
        g.iter_mut().for_each(|gi| *gi /= n);
    }
    Ok(JointPassReport {
        gradients: grads,
        point_loads: batch.len() as u64,
        scalar_mults,
    })
}

/// Adapter that trains a [`LinearModel`]'s parameters with the generic
/// optimizers. Dataset class ids 0/1 are mapped to the loss's labels.
#[derive(Debug, Clone, Copy)]
pub struct LinearObjective {
    pub loss: LossKind,
    pub bias: bool,
}

impl LinearObjective {
    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], Option<f64>) {
        if self.bias {
            let (head, tail) = w.split_at(w.len() - 1);
            (head, Some(tail[0]))
        } else {
            (w, None)
        }
    }
}

impl Objective for LinearObjective {
    fn n_params(&self, n_features: usize) -> usize {
        n_features + usize::from(self.bias)
    }

    fn gradient(&self, w: &[f64], x: &[f64], y: f64, grad: &mut [f64]) -> Result<()> {
        let (weights, bias) = self.split(w);
        check_dim(weights.len(), x.len())?;
        let y = self.loss.target_for_class(y as usize)?;
        let f = self.loss.derivative(inner(weights, bias, x), y);
        for (gi, xi) in grad.iter_mut().zip(x) {
            *gi = f * xi;
        }
        if self.bias {
            grad[weights.len()] = f;
        }
        Ok(())
    }

    fn loss(&self, w: &[f64], x: &[f64], y: f64) -> Result<f64> {
        let (weights, bias) = self.split(w);
        check_dim(weights.len(), x.len())?;
        let y = self.loss.target_for_class(y as usize)?;
        Ok(self.loss.value(inner(weights, bias, x), y))
    }
}
