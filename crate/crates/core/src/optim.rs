//! Gradient-descent family: GD, SGD and mini-batch GD share one template
//! parameterised by the batch size `n` (`n = |T|` is GD, `n = 1` is SGD).
//! Sliding-window SGD additionally re-includes the points of the last `w`
//! batches in every gradient.
//!
//! Conventions:
//! - the combined gradient is the mean over the effective batch;
//! - weight decay shrinks weights by `(1 - ηλ)` before the rule step;
//! - the reported epoch loss is the mean per-point loss over the whole
//!   training set, evaluated after the epoch's last update. Those monitoring
//!   reads are not counted as point loads.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::{BatchStream, Dataset, ShuffleMode};
use crate::error::{check_dim, Error, Result};
use crate::trace::{AccessTrace, ObjectId};

/// A differentiable per-point loss over a flat parameter vector.
pub trait Objective {
    /// Number of parameters this objective expects for data with
    /// `n_features` features.
    fn n_params(&self, n_features: usize) -> usize {
        n_features
    }

    /// Writes `∂loss/∂w` at point `(x, y)` into `grad` (overwriting it).
    fn gradient(&self, w: &[f64], x: &[f64], y: f64, grad: &mut [f64]) -> Result<()>;

    fn loss(&self, w: &[f64], x: &[f64], y: f64) -> Result<f64>;
}

impl<O: Objective + ?Sized> Objective for &O {
    fn n_params(&self, n_features: usize) -> usize {
        (**self).n_params(n_features)
    }

    fn gradient(&self, w: &[f64], x: &[f64], y: f64, grad: &mut [f64]) -> Result<()> {
        (**self).gradient(w, x, y, grad)
    }

    fn loss(&self, w: &[f64], x: &[f64], y: f64) -> Result<f64> {
        (**self).loss(w, x, y)
    }
}

/// Objective assembled from a gradient closure and a loss closure.
pub struct FnObjective<G, L> {
    pub grad_fn: G,
    pub loss_fn: L,
}

impl<G, L> Objective for FnObjective<G, L>
where
    G: Fn(&[f64], &[f64], f64, &mut [f64]),
    L: Fn(&[f64], &[f64], f64) -> f64,
{
    fn gradient(&self, w: &[f64], x: &[f64], y: f64, grad: &mut [f64]) -> Result<()> {
        (self.grad_fn)(w, x, y, grad);
        Ok(())
    }

    fn loss(&self, w: &[f64], x: &[f64], y: f64) -> Result<f64> {
        Ok((self.loss_fn)(w, x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum UpdateRule {
    Vanilla,
    Momentum { mu: f64 },
    Adagrad { eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl UpdateRule {
    pub fn momentum() -> Self {
        UpdateRule::Momentum { mu: 0.9 }
    }

    pub fn adagrad() -> Self {
        UpdateRule::Adagrad { eps: 1e-8 }
    }

    pub fn adam() -> Self {
        UpdateRule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Parses `vanilla`, `momentum`, `adagrad` or `adam` with default
    /// hyperparameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "vanilla" | "sgd" => Ok(UpdateRule::Vanilla),
            "momentum" => Ok(Self::momentum()),
            "adagrad" => Ok(Self::adagrad()),
            "adam" => Ok(Self::adam()),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Vanilla => "vanilla",
            UpdateRule::Momentum { .. } => "momentum",
            UpdateRule::Adagrad { .. } => "adagrad",
            UpdateRule::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UpdateRule::Vanilla => Ok(()),
            UpdateRule::Momentum { mu } if (0.0..1.0).contains(&mu) => Ok(()),
            UpdateRule::Adagrad { eps } if eps > 0.0 => Ok(()),
            UpdateRule::Adam { beta1, beta2, eps }
                if beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && eps > 0.0 =>
            {
                Ok(())
            }
            bad => Err(Error::invalid(format!("invalid update rule hyperparameters {bad:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub step_size: f64,
    pub rule: UpdateRule,
    pub weight_decay: f64,
    /// Number of previous batches re-used by sliding-window SGD.
    pub window_batches: usize,
    pub shuffle: ShuffleMode,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            batch_size: 1,
            epochs: 1,
            step_size: 0.01,
            rule: UpdateRule::Vanilla,
            weight_decay: 0.0,
            window_batches: 0,
            shuffle: ShuffleMode::PerEpochShuffle,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.rule.validate()
    }

    fn stream(&self, dataset: &Dataset) -> Result<BatchStream> {
        BatchStream::new(
            dataset.n_points(),
            self.batch_size,
            self.epochs,
            self.shuffle,
            self.seed,
        )
    }
}

/// Per-weight optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateRuleState {
    Vanilla,
    Momentum {
        mu: f64,
        velocity: Vec<f64>,
    },
    Adagrad {
        eps: f64,
        sum_sq: Vec<f64>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl UpdateRuleState {
    pub fn new(rule: UpdateRule, dim: usize) -> Self {
        match rule {
            UpdateRule::Vanilla => UpdateRuleState::Vanilla,
            UpdateRule::Momentum { mu } => UpdateRuleState::Momentum {
                mu,
                velocity: vec![0.0; dim],
            },
            UpdateRule::Adagrad { eps } => UpdateRuleState::Adagrad {
                eps,
                sum_sq: vec![0.0; dim],
            },
            UpdateRule::Adam { beta1, beta2, eps } => UpdateRuleState::Adam {
                beta1,
                beta2,
                eps,
                m: vec![0.0; dim],
                v: vec![0.0; dim],
                t: 0,
            },
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            UpdateRuleState::Vanilla => None,
            UpdateRuleState::Momentum { velocity, .. } => Some(velocity.len()),
            UpdateRuleState::Adagrad { sum_sq, .. } => Some(sum_sq.len()),
            UpdateRuleState::Adam { m, .. } => Some(m.len()),
        }
    }
}

/// One optimizer step: `w ← (1 − ηλ)·w`, then the rule's step along `grad`.
///
/// - vanilla: `w ← w − η g`
/// - momentum: `v ← μ v − η g; w ← w + v`
/// - Adagrad: `a ← a + g²; w ← w − η g / √(a + ε)`
/// - Adam: bias-corrected moments, `w ← w − η m̂ / (√v̂ + ε)`
pub fn apply_update(
    state: &mut UpdateRuleState,
    w: &mut [f64],
    grad: &[f64],
    step_size: f64,
    weight_decay: f64,
) -> Result<()> {
    check_dim(w.len(), grad.len())?;
    if let Some(d) = state.dim() {
        check_dim(d, w.len())?;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    if weight_decay != 0.0 {
        let shrink = 1.0 - step_size * weight_decay;
        w.iter_mut().for_each(|wi| *wi *= shrink);
    }
    match state {
        UpdateRuleState::Vanilla => {
            for (wi, gi) in w.iter_mut().zip(grad) {
                *wi -= step_size * gi;
            }
        }
        UpdateRuleState::Momentum { mu, velocity } => {
            for ((wi, vi), gi) in w.iter_mut().zip(velocity.iter_mut()).zip(grad) {
                *vi = *mu * *vi - step_size * gi;
                *wi += *vi;
            }
        }
        UpdateRuleState::Adagrad { eps, sum_sq } => {
            for ((wi, ai), gi) in w.iter_mut().zip(sum_sq.iter_mut()).zip(grad) {
                *ai += gi * gi;
                *wi -= step_size * gi / (*ai + *eps).sqrt();
            }
        }
        UpdateRuleState::Adam {
            beta1,
            beta2,
            eps,
            m,
            v,
            t,
        } => {
            *t += 1;
            let c1 = 1.0 - beta1.powi(*t as i32);
            let c2 = 1.0 - beta2.powi(*t as i32);
            for (((wi, mi), vi), gi) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grad) {
                *mi = *beta1 * *mi + (1.0 - *beta1) * gi;
                *vi = *beta2 * *vi + (1.0 - *beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *wi -= step_size * m_hat / (v_hat.sqrt() + *eps);
            }
        }
    }
    Ok(())
}

/// Batches most recently used as "new" batches, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlidingWindow {
    capacity: usize,
    batches: VecDeque<Vec<usize>>,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            batches: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, batch: Vec<usize>) {
        if self.capacity == 0 {
            return;
        }
        self.batches.push_back(batch);
        while self.batches.len() > self.capacity {
            self.batches.pop_front();
        }
    }

    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.batches.iter().map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Total points held across all retained batches.
    pub fn n_points(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Cumulative at the end of the epoch.
    pub point_loads: u64,
    /// Cumulative at the end of the epoch.
    pub grad_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Training points read for gradient computation as new (uncached) data.
    pub point_loads: u64,
    pub grad_evals: u64,
    pub updates: u64,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,point_loads,grad_evals\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{},{}\n",
                e.epoch, e.mean_loss, e.point_loads, e.grad_evals
            ));
        }
        out
    }

    fn close_epoch(&mut self, epoch: usize, mean_loss: f64) {
        self.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            point_loads: self.point_loads,
            grad_evals: self.grad_evals,
        });
    }
}

pub fn mean_loss<O: Objective>(objective: &O, w: &[f64], dataset: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..dataset.n_points() {
        total += objective.loss(w, dataset.point(i), dataset.target(i))?;
    }
    Ok(total / dataset.n_points() as f64)
}

fn check_setup<O: Objective>(model: &[f64], objective: &O, dataset: &Dataset, config: &OptimizerConfig) -> Result<()> {
    config.validate()?;
    check_dim(objective.n_params(dataset.n_features()), model.len())
}

#[inline]
fn accumulate<O: Objective>(
    objective: &O,
    w: &[f64],
    dataset: &Dataset,
    t: usize,
    scratch: &mut [f64],
    sum: &mut [f64],
) -> Result<()> {
    objective.gradient(w, dataset.point(t), dataset.target(t), scratch)?;
    for (s, g) in sum.iter_mut().zip(scratch.iter()) {
        *s += g;
    }
    Ok(())
}

fn step(
    state: &mut UpdateRuleState,
    w: &mut [f64],
    sum: &mut [f64],
    count: usize,
    config: &OptimizerConfig,
    epoch: usize,
) -> Result<()> {
    let inv = count as f64;
    sum.iter_mut().for_each(|g| *g /= inv);
    if sum.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { epoch });
    }
    apply_update(state, w, sum, config.step_size, config.weight_decay)
}

/// Mini-batch gradient descent. `batch_size = |T|` gives GD and
/// `batch_size = 1` gives SGD; each epoch performs `⌈|T| / n⌉` updates.
pub fn train<O: Objective>(
    model: Vec<f64>,
    objective: &O,
    dataset: &Dataset,
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, TrainReport)> {
    train_traced(model, objective, dataset, config, None)
}

/// [`train`] that also records its training-point and model accesses:
/// per point a read of the point and a read of the model, per batch a
/// write of the model.
pub fn train_traced<O: Objective>(
    mut w: Vec<f64>,
    objective: &O,
    dataset: &Dataset,
    config: &OptimizerConfig,
    mut trace: Option<&mut AccessTrace>,
) -> Result<(Vec<f64>, TrainReport)> {
    check_setup(&w, objective, dataset, config)?;
    let dim = w.len();
    let mut state = UpdateRuleState::new(config.rule, dim);
    let mut report = TrainReport::default();
    let mut scratch = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let stream = config.stream(dataset)?;
    let per_epoch = stream.batches_per_epoch();

    for (b, batch) in stream.enumerate() {
        sum.iter_mut().for_each(|g| *g = 0.0);
        for &t in &batch.indices {
            if let Some(tr) = trace.as_deref_mut() {
                tr.read(ObjectId::TRAIN_SET, t as u64);
                tr.read(ObjectId::MODEL, 0);
            }
            accumulate(objective, &w, dataset, t, &mut scratch, &mut sum).map_err(|e| divergence(e, batch.epoch))?;
        }
        report.point_loads += batch.indices.len() as u64;
        report.grad_evals += batch.indices.len() as u64;
        step(&mut state, &mut w, &mut sum, batch.indices.len(), config, batch.epoch)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.write(ObjectId::MODEL, 0);
        }
        report.updates += 1;
        if (b + 1) % per_epoch == 0 {
            let loss = mean_loss(objective, &w, dataset)?;
            report.close_epoch(batch.epoch, loss);
        }
    }
    Ok((w, report))
}

/// Sliding-window SGD. Each step averages the gradient over the new batch
/// plus every batch in the window (window batches weighted like new ones),
/// then pushes the new batch into the window. Only new points count as
/// point loads; window points are treated as cache-resident. The window
/// persists across epoch boundaries. `window_batches = 0` is plain MB-GD.
pub fn train_swsgd<O: Objective>(
    mut w: Vec<f64>,
    objective: &O,
    dataset: &Dataset,
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, TrainReport)> {
    check_setup(&w, objective, dataset, config)?;
    let dim = w.len();
    let mut state = UpdateRuleState::new(config.rule, dim);
    let mut window = SlidingWindow::new(config.window_batches);
    let mut report = TrainReport::default();
    let mut scratch = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let stream = config.stream(dataset)?;
    let per_epoch = stream.batches_per_epoch();

    for (b, batch) in stream.enumerate() {
        sum.iter_mut().for_each(|g| *g = 0.0);
        for &t in &batch.indices {
            accumulate(objective, &w, dataset, t, &mut scratch, &mut sum).map_err(|e| divergence(e, batch.epoch))?;
        }
        for cached in window.batches() {
            for &t in cached {
                accumulate(objective, &w, dataset, t, &mut scratch, &mut sum)
                    .map_err(|e| divergence(e, batch.epoch))?;
            }
        }
        let effective = batch.indices.len() + window.n_points();
        report.point_loads += batch.indices.len() as u64;
        report.grad_evals += effective as u64;
        step(&mut state, &mut w, &mut sum, effective, config, batch.epoch)?;
        report.updates += 1;
        window.push(batch.indices);
        if (b + 1) % per_epoch == 0 {
            let loss = mean_loss(objective, &w, dataset)?;
            report.close_epoch(batch.epoch, loss);
        }
    }
    Ok((w, report))
}

fn divergence(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Divergence { epoch },
        other => other,
    }
}
