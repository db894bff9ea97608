//! Drivers that train many learner instances on subsets of one dataset:
//! k-fold cross-validation (per-fold and fold-streamed), bootstrap
//! variance, bagging and a three-model boosting round.
//!
//! Every driver counts training-point loads, so the cost of re-reading
//! the data can be compared between schedules.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bayes::{fit_nb, predict_nb, NbModel};
use crate::data::{bootstrap_indices, partition_folds, BatchStream, Dataset, ShuffleMode};
use crate::error::{Error, Result};
use crate::instance::knn_predict_point;
use crate::linear::{batch_update, LinearModel, LossKind};
use crate::optim::{UpdateRule, UpdateRuleState};
use crate::rng;

/// A trainable classifier bound to its hyperparameters.
pub trait Learner {
    /// Trains from scratch on `data[indices]`, returning the number of
    /// training-point loads performed.
    fn fit(&mut self, data: &Dataset, indices: &[usize]) -> Result<u64>;

    fn predict(&self, x: &[f64]) -> Result<usize>;

    fn supports_update(&self) -> bool {
        false
    }

    /// One incremental step on `data[batch]` during sweep `epoch`.
    fn update(&mut self, _data: &Dataset, _batch: &[usize], _epoch: usize) -> Result<u64> {
        Err(Error::Unsupported("learner has no incremental update"))
    }
}

/// Builds fresh, independent learner instances from a seed.
pub trait LearnerFactory {
    type Learner: Learner;
    fn create(&self, seed: u64) -> Self::Learner;
}

impl<F, L> LearnerFactory for F
where
    F: Fn(u64) -> L,
    L: Learner,
{
    type Learner = L;
    fn create(&self, seed: u64) -> L {
        self(seed)
    }
}

pub fn accuracy<L: Learner + ?Sized>(learner: &L, data: &Dataset, indices: &[usize]) -> Result<f64> {
    let ids = data.require_classification()?;
    if indices.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut correct = 0usize;
    for &i in indices {
        correct += usize::from(learner.predict(data.point(i))? == ids[i]);
    }
    Ok(correct as f64 / indices.len() as f64)
}

fn all_indices(data: &Dataset) -> Vec<usize> {
    (0..data.n_points()).collect()
}

/// Majority vote; ties go to the smallest class id.
fn majority(votes: impl IntoIterator<Item = usize>) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let mut best = (0, 0);
    for (&c, &n) in &counts {
        if n > best.1 {
            best = (c, n);
        }
    }
    best.0
}

/// Always predicts the same class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantLearner {
    pub class: usize,
}

impl Learner for ConstantLearner {
    fn fit(&mut self, _data: &Dataset, _indices: &[usize]) -> Result<u64> {
        Ok(0)
    }

    fn predict(&self, _x: &[f64]) -> Result<usize> {
        Ok(self.class)
    }
}

/// k-NN over the fitted subset.
#[derive(Debug, Clone)]
pub struct KnnLearner {
    pub k: usize,
    train: Option<Dataset>,
}

impl KnnLearner {
    pub fn new(k: usize) -> Self {
        Self { k, train: None }
    }
}

impl Learner for KnnLearner {
    fn fit(&mut self, data: &Dataset, indices: &[usize]) -> Result<u64> {
        self.train = Some(data.subset(indices)?);
        Ok(indices.len() as u64)
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        let train = self.train.as_ref().ok_or(Error::Unsupported("predict before fit"))?;
        let members: Vec<usize> = (0..train.n_points()).collect();
        knn_predict_point(train, &members, x, self.k)
    }
}

#[derive(Debug, Clone)]
pub struct NaiveBayesLearner {
    pub var_floor: f64,
    model: Option<NbModel>,
}

impl NaiveBayesLearner {
    pub fn new(var_floor: f64) -> Self {
        Self { var_floor, model: None }
    }
}

impl Learner for NaiveBayesLearner {
    fn fit(&mut self, data: &Dataset, indices: &[usize]) -> Result<u64> {
        let (model, counter) = fit_nb(&data.subset(indices)?, self.var_floor)?;
        self.model = Some(model);
        Ok(counter.point_reads)
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        let model = self.model.as_ref().ok_or(Error::Unsupported("predict before fit"))?;
        Ok(predict_nb(model, x)?.0)
    }
}

/// Shared log of `(point, epoch)` visits.
pub type VisitLog = Rc<RefCell<Vec<(usize, usize)>>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSettings {
    pub loss: LossKind,
    pub bias: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub weight_decay: f64,
    pub rule: UpdateRule,
}

impl Default for SgdSettings {
    fn default() -> Self {
        Self {
            loss: LossKind::Hinge,
            bias: true,
            epochs: 5,
            batch_size: 8,
            step_size: 0.05,
            weight_decay: 0.0,
            rule: UpdateRule::Vanilla,
        }
    }
}

/// Binary linear classifier trained by mini-batch SGD; supports
/// incremental updates for fold streaming.
#[derive(Debug, Clone)]
pub struct LinearSgdLearner {
    pub settings: SgdSettings,
    seed: u64,
    model: Option<LinearModel>,
    state: Option<UpdateRuleState>,
    visits: Option<VisitLog>,
}

impl LinearSgdLearner {
    pub fn new(settings: SgdSettings, seed: u64) -> Self {
        Self {
            settings,
            seed,
            model: None,
            state: None,
            visits: None,
        }
    }

    /// Records every point visited by `fit` or `update`.
    pub fn with_visit_log(mut self, log: VisitLog) -> Self {
        self.visits = Some(log);
        self
    }

    pub fn model(&self) -> Option<&LinearModel> {
        self.model.as_ref()
    }

    fn reset(&mut self, n_features: usize) {
        let mut model = LinearModel::zeros(self.settings.loss, n_features);
        if self.settings.bias {
            model = model.with_bias(0.0);
        }
        self.state = Some(UpdateRuleState::new(self.settings.rule, model.n_params()));
        self.model = Some(model);
    }
}

impl Learner for LinearSgdLearner {
    fn fit(&mut self, data: &Dataset, indices: &[usize]) -> Result<u64> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        self.reset(data.n_features());
        let batch = self.settings.batch_size.min(indices.len());
        let stream = BatchStream::new(
            indices.len(),
            batch,
            self.settings.epochs,
            ShuffleMode::PerEpochShuffle,
            self.seed,
        )?;
        let mut loads = 0;
        for b in stream {
            let mapped: Vec<usize> = b.indices.iter().map(|&p| indices[p]).collect();
            loads += self.update(data, &mapped, b.epoch)?;
        }
        Ok(loads)
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.model
            .as_ref()
            .ok_or(Error::Unsupported("predict before fit"))?
            .predict_class(x)
    }

    fn supports_update(&self) -> bool {
        true
    }

    fn update(&mut self, data: &Dataset, batch: &[usize], epoch: usize) -> Result<u64> {
        if self.model.is_none() {
            self.reset(data.n_features());
        }
        let (Some(model), Some(state)) = (self.model.as_mut(), self.state.as_mut()) else {
            unreachable!("reset initialises model and state");
        };
        batch_update(
            model,
            data,
            batch,
            self.settings.step_size,
            self.settings.weight_decay,
            state,
        )?;
        if let Some(log) = &self.visits {
            log.borrow_mut().extend(batch.iter().map(|&t| (t, epoch)));
        }
        Ok(batch.len() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub point_loads: u64,
}

impl CvReport {
    fn new(fold_accuracy: Vec<f64>, point_loads: u64) -> Self {
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / fold_accuracy.len() as f64;
        Self {
            fold_accuracy,
            mean_accuracy,
            point_loads,
        }
    }
}

/// Per-fold cross-validation: instance `i` is trained on every fold but
/// `i`, then tested on fold `i`.
pub fn cross_validate<F: LearnerFactory>(factory: &F, data: &Dataset, k: usize, seed: u64) -> Result<CvReport> {
    data.require_classification()?;
    let folds = partition_folds(data.n_points(), k, seed)?;
    let mut acc = Vec::with_capacity(k);
    let mut loads = 0;
    for f in 0..k {
        let mut learner = factory.create(rng::derive(seed, f as u64));
        loads += learner.fit(data, &folds.complement(f))?;
        acc.push(accuracy(&learner, data, &folds.fold(f))?);
    }
    Ok(CvReport::new(acc, loads))
}

/// Fold-streamed cross-validation. All k instances are held at once; in
/// each sweep every fold is loaded once, in mini-batches, and each batch
/// is handed to the k − 1 instances that train on it. Each instance sees
/// the same `(point, epoch)` visits as in [`cross_validate`] with an
/// `epochs`-epoch learner, in a different order.
pub fn cross_validate_streamed<F: LearnerFactory>(
    factory: &F,
    data: &Dataset,
    k: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<CvReport> {
    data.require_classification()?;
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let folds = partition_folds(data.n_points(), k, seed)?;
    let mut learners: Vec<F::Learner> = (0..k).map(|f| factory.create(rng::derive(seed, f as u64))).collect();
    if !learners.iter().all(Learner::supports_update) {
        return Err(Error::Unsupported(
            "fold streaming needs learners with incremental update",
        ));
    }
    let members: Vec<Vec<usize>> = (0..k).map(|f| folds.fold(f)).collect();
    let mut loads = 0;
    for epoch in 0..epochs {
        let mut r = rng::from_seed(rng::derive(seed, (k + epoch) as u64));
        for (f, fold) in members.iter().enumerate() {
            let mut order = fold.clone();
            order.shuffle(&mut r);
            for batch in order.chunks(batch_size) {
                loads += batch.len() as u64;
                for (i, learner) in learners.iter_mut().enumerate() {
                    if i != f {
                        learner.update(data, batch, epoch)?;
                    }
                }
            }
        }
    }
    let acc = learners
        .iter()
        .zip(&members)
        .map(|(l, fold)| accuracy(l, data, fold))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::new(acc, loads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population variance of `accuracies`.
    pub variance: f64,
    pub point_loads: u64,
}

/// Trains `n_boot` instances on bootstrap samples and reports the spread
/// of their accuracy on `test_set`.
pub fn bootstrap_variance<F: LearnerFactory>(
    factory: &F,
    data: &Dataset,
    n_boot: usize,
    test_set: &Dataset,
    seed: u64,
) -> Result<BootstrapReport> {
    let seeds: Vec<u64> = (0..n_boot as u64).map(|b| rng::derive(seed, b)).collect();
    bootstrap_variance_with_seeds(factory, data, &seeds, test_set)
}

/// [`bootstrap_variance`] with one explicit seed per replicate; the seed
/// drives both the resample and the learner.
pub fn bootstrap_variance_with_seeds<F: LearnerFactory>(
    factory: &F,
    data: &Dataset,
    seeds: &[u64],
    test_set: &Dataset,
) -> Result<BootstrapReport> {
    if seeds.len() < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 replicates"));
    }
    let test = all_indices(test_set);
    let mut accuracies = Vec::with_capacity(seeds.len());
    let mut loads = 0;
    for &s in seeds {
        let sample = bootstrap_indices(data.n_points(), s)?;
        let mut learner = factory.create(s);
        loads += learner.fit(data, &sample)?;
        accuracies.push(accuracy(&learner, test_set, &test)?);
    }
    // Welford, so identical replicates give exactly zero
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &a) in accuracies.iter().enumerate() {
        let delta = a - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (a - mean);
    }
    let variance = m2 / accuracies.len() as f64;
    Ok(BootstrapReport {
        accuracies,
        mean,
        variance,
        point_loads: loads,
    })
}

#[derive(Debug, Clone)]
pub struct BaggedEnsemble<L> {
    pub members: Vec<L>,
}

impl<L: Learner> BaggedEnsemble<L> {
    /// Majority vote of the members; ties to the smallest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let votes = self.members.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
        Ok(majority(votes))
    }
}

impl<L: Learner> Learner for BaggedEnsemble<L> {
    fn fit(&mut self, _data: &Dataset, _indices: &[usize]) -> Result<u64> {
        Err(Error::Unsupported("a bagged ensemble is built by bagging()"))
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        BaggedEnsemble::predict(self, x)
    }
}

/// Bootstrap aggregation: each member trains on its own resample.
pub fn bagging<F: LearnerFactory>(
    factory: &F,
    data: &Dataset,
    n_models: usize,
    seed: u64,
) -> Result<BaggedEnsemble<F::Learner>> {
    if n_models == 0 {
        return Err(Error::invalid("bagging needs at least one model"));
    }
    let samples = (0..n_models as u64)
        .map(|m| bootstrap_indices(data.n_points(), rng::derive(seed, m)))
        .collect::<Result<Vec<_>>>()?;
    bagging_from_samples(factory, data, &samples, seed)
}

/// Bagging with caller-chosen training samples, one per member.
pub fn bagging_from_samples<F: LearnerFactory>(
    factory: &F,
    data: &Dataset,
    samples: &[Vec<usize>],
    seed: u64,
) -> Result<BaggedEnsemble<F::Learner>> {
    if samples.is_empty() {
        return Err(Error::invalid("bagging needs at least one model"));
    }
    let mut members = Vec::with_capacity(samples.len());
    for (m, sample) in samples.iter().enumerate() {
        let mut learner = factory.create(rng::derive(seed, m as u64));
        learner.fit(data, sample)?;
        members.push(learner);
    }
    Ok(BaggedEnsemble { members })
}

/// Memo of `(model, point) → prediction`; each key is evaluated once.
#[derive(Debug, Clone, Default)]
pub struct PredictionCache {
    entries: HashMap<(usize, usize), usize>,
    hits: u64,
    misses: u64,
    evaluations: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredictionCacheStats {
    pub hits: u64,
    pub misses: u64,
    /// Evaluations per model id.
    pub evaluations: BTreeMap<usize, u64>,
}

impl PredictionCache {
    pub fn get_or_eval(&mut self, model: usize, point: usize, eval: impl FnOnce() -> Result<usize>) -> Result<usize> {
        if let Some(&p) = self.entries.get(&(model, point)) {
            self.hits += 1;
            return Ok(p);
        }
        let p = eval()?;
        self.misses += 1;
        *self.evaluations.entry(model).or_default() += 1;
        self.entries.insert((model, point), p);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> PredictionCacheStats {
        PredictionCacheStats {
            hits: self.hits,
            misses: self.misses,
            evaluations: self.evaluations.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    /// The first model was right everywhere or wrong everywhere on the
    /// training set, so no balanced second sample exists.
    M1Only,
    /// The first two models agree on every training point.
    EmptyDisagreement,
}

#[derive(Debug, Clone)]
pub struct BoostEnsemble<L> {
    pub members: Vec<L>,
    pub degeneracy: Option<Degeneracy>,
}

impl<L: Learner> BoostEnsemble<L> {
    /// Majority vote over the members; ties to the smallest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let votes = self.members.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
        Ok(majority(votes))
    }
}

#[derive(Debug, Clone)]
pub struct BoostResult<L> {
    pub ensemble: BoostEnsemble<L>,
    pub cache: PredictionCacheStats,
    pub m1_test_accuracy: f64,
    pub ensemble_test_accuracy: f64,
    /// Sizes of the first, second and third training samples.
    pub sample_sizes: [usize; 3],
}

/// One boosting round of three models.
///
/// M1 trains on a uniform sample of `sample_size` points. M2 trains on
/// `⌊s/2⌋` points M1 classifies correctly and `⌈s/2⌉` it gets wrong, with
/// `s = min(sample_size, 2·min(#correct, #wrong))`. M3 trains on the
/// points where M1 and M2 disagree. Predictions over the training set
/// go through a [`PredictionCache`].
pub fn boost3<F: LearnerFactory>(
    factory: &F,
    data: &Dataset,
    test_set: &Dataset,
    sample_size: usize,
    seed: u64,
) -> Result<BoostResult<F::Learner>> {
    let ids = data.require_classification()?;
    if data.n_classes() > 2 {
        return Err(Error::Unsupported("boosting needs a binary classification dataset"));
    }
    let n = data.n_points();
    if sample_size == 0 || sample_size > n {
        return Err(Error::invalid(format!(
            "sample size must be in 1..={n}, got {sample_size}"
        )));
    }
    let mut r = rng::from_seed(seed);
    let mut cache = PredictionCache::default();
    let test = all_indices(test_set);

    let s1: Vec<usize> = rand::seq::index::sample(&mut r, n, sample_size).into_vec();
    let mut m1 = factory.create(rng::derive(seed, 1));
    m1.fit(data, &s1)?;

    let (mut right, mut wrong) = (Vec::new(), Vec::new());
    for (t, &id) in ids.iter().enumerate() {
        let p = cache.get_or_eval(0, t, || m1.predict(data.point(t)))?;
        if p == id {
            right.push(t);
        } else {
            wrong.push(t);
        }
    }
    let m1_test_accuracy = accuracy(&m1, test_set, &test)?;

    if right.is_empty() || wrong.is_empty() {
        return Ok(BoostResult {
            ensemble_test_accuracy: m1_test_accuracy,
            ensemble: BoostEnsemble {
                members: vec![m1],
                degeneracy: Some(Degeneracy::M1Only),
            },
            cache: cache.stats(),
            m1_test_accuracy,
            sample_sizes: [s1.len(), 0, 0],
        });
    }

    let s = sample_size.min(2 * right.len().min(wrong.len()));
    right.shuffle(&mut r);
    wrong.shuffle(&mut r);
    let mut s2: Vec<usize> = right[..s / 2].iter().chain(&wrong[..s.div_ceil(2)]).copied().collect();
    s2.shuffle(&mut r);
    let mut m2 = factory.create(rng::derive(seed, 2));
    m2.fit(data, &s2)?;

    let mut disagree = Vec::new();
    for t in 0..n {
        let p1 = cache.get_or_eval(0, t, || m1.predict(data.point(t)))?;
        let p2 = cache.get_or_eval(1, t, || m2.predict(data.point(t)))?;
        if p1 != p2 {
            disagree.push(t);
        }
    }

    let (members, degeneracy, s3) = if disagree.is_empty() {
        (vec![m1, m2], Some(Degeneracy::EmptyDisagreement), 0)
    } else {
        let mut m3 = factory.create(rng::derive(seed, 3));
        m3.fit(data, &disagree)?;
        (vec![m1, m2, m3], None, disagree.len())
    };
    let ensemble = BoostEnsemble { members, degeneracy };
    let mut correct = 0usize;
    for &t in &test {
        correct += usize::from(ensemble.predict(test_set.point(t))? == test_set.class(t));
    }
    Ok(BoostResult {
        ensemble_test_accuracy: correct as f64 / test.len() as f64,
        ensemble,
        cache: cache.stats(),
        m1_test_accuracy,
        sample_sizes: [s1.len(), s2.len(), s3],
    })
}
