//! Instance-based classifiers: k-nearest neighbours and the
//! Parzen-Rosenblatt window (Gaussian kernel), with query batching and a
//! joint pass that feeds each squared distance to both learners.
//!
//! All three drivers share one loop nest: queries are taken in blocks of
//! `query_batch`; inside a block, each reference point is loaded once and
//! compared against every query in the block.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::trace::{AccessTrace, ObjectId};

/// The k closest reference points seen so far, ascending by
/// `(distance², index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    entries: Vec<(f64, usize)>,
}

impl NeighborList {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Inserts the candidate if it is among the k smallest. Equal distances
    /// keep the smaller index.
    #[inline]
    pub fn offer(&mut self, d2: f64, index: usize) {
        if self.entries.len() == self.k {
            match self.entries.last() {
                Some(&(worst, wi)) if (d2, index) < (worst, wi) => {
                    self.entries.pop();
                }
                _ => return,
            }
        }
        let pos = self.entries.partition_point(|&e| e < (d2, index));
        self.entries.insert(pos, (d2, index));
    }

    /// Majority class among the neighbours. Ties go to the class with the
    /// smaller summed distance², then to the smaller class id.
    pub fn vote(&self, classes: &[usize], n_classes: usize) -> usize {
        let mut counts = vec![0usize; n_classes];
        let mut sums = vec![0.0f64; n_classes];
        for &(d2, j) in &self.entries {
            counts[classes[j]] += 1;
            sums[classes[j]] += d2;
        }
        let mut best = 0;
        for c in 1..n_classes {
            if counts[c] > counts[best] || (counts[c] == counts[best] && sums[c] < sums[best]) {
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let spec = Self {
            kind: KernelKind::Gaussian,
            bandwidth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive and finite, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }

    /// Log of the unnormalised kernel weight for a squared distance.
    #[inline]
    fn log_weight(&self, d2: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => -d2 / (2.0 * self.bandwidth * self.bandwidth),
        }
    }
}

/// Running `ln Σ exp(v)` that stays finite when every term underflows.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    #[inline]
    fn add(&mut self, v: f64) {
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstanceReport {
    pub distance_computations: u64,
    pub point_loads: u64,
    pub wall_time_ns: u64,
}

impl InstanceReport {
    pub fn merged(self, other: Self) -> Self {
        Self {
            distance_computations: self.distance_computations + other.distance_computations,
            point_loads: self.point_loads + other.point_loads,
            wall_time_ns: self.wall_time_ns + other.wall_time_ns,
        }
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn check_inputs<'a>(rt: &'a Dataset, p: &Dataset, query_batch: usize) -> Result<&'a [usize]> {
    check_dim(rt.n_features(), p.n_features())?;
    if query_batch == 0 {
        return Err(Error::invalid("query batch must be at least 1"));
    }
    rt.require_classification()
}

fn check_k(k: usize, rt: &Dataset) -> Result<()> {
    if k == 0 || k > rt.n_points() {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", rt.n_points())));
    }
    Ok(())
}

/// What a pass over (reference, query) pairs feeds each distance into.
struct Consumers<'a> {
    knn: Option<(usize, Vec<NeighborList>)>,
    prw: Option<(&'a KernelSpec, Vec<LogSumExp>)>,
}

/// k-NN labels, PRW labels (each present when requested) and counters.
type PassLabels = (Option<Vec<usize>>, Option<Vec<usize>>, InstanceReport);

fn run_pass(
    rt: &Dataset,
    p: &Dataset,
    query_batch: usize,
    mut consumers: Consumers<'_>,
    mut trace: Option<&mut AccessTrace>,
) -> Result<PassLabels> {
    let classes = check_inputs(rt, p, query_batch)?;
    let n_classes = rt.n_classes();
    let start = Instant::now();
    let mut report = InstanceReport::default();
    let mut knn_labels = consumers.knn.as_ref().map(|_| Vec::with_capacity(p.n_points()));
    let mut prw_labels = consumers.prw.as_ref().map(|_| Vec::with_capacity(p.n_points()));

    let mut q0 = 0;
    while q0 < p.n_points() {
        let q1 = (q0 + query_batch).min(p.n_points());
        let width = q1 - q0;
        if let Some((k, lists)) = consumers.knn.as_mut() {
            lists.clear();
            lists.resize_with(width, || NeighborList::new(*k));
        }
        if let Some((_, acc)) = consumers.prw.as_mut() {
            acc.clear();
            acc.resize(width * n_classes, LogSumExp::EMPTY);
        }
        for (j, &cj) in classes.iter().enumerate() {
            let r = rt.point(j);
            if let Some(tr) = trace.as_deref_mut() {
                tr.read(ObjectId::TRAIN_SET, j as u64);
            }
            for (slot, q) in (q0..q1).enumerate() {
                if let Some(tr) = trace.as_deref_mut() {
                    tr.read(ObjectId::QUERY_SET, q as u64);
                }
                let d2 = squared_distance(p.point(q), r);
                if let Some((_, lists)) = consumers.knn.as_mut() {
                    lists[slot].offer(d2, j);
                }
                if let Some((kernel, acc)) = consumers.prw.as_mut() {
                    acc[slot * n_classes + cj].add(kernel.log_weight(d2));
                }
            }
        }
        report.point_loads += rt.n_points() as u64;
        report.distance_computations += (rt.n_points() * width) as u64;
        if let (Some((_, lists)), Some(out)) = (consumers.knn.as_ref(), knn_labels.as_mut()) {
            out.extend(lists.iter().map(|l| l.vote(classes, n_classes)));
        }
        if let (Some((_, acc)), Some(out)) = (consumers.prw.as_ref(), prw_labels.as_mut()) {
            out.extend(acc.chunks(n_classes).map(argmax_first));
        }
        q0 = q1;
    }
    report.wall_time_ns = start.elapsed().as_nanos() as u64;
    Ok((knn_labels, prw_labels, report))
}

fn argmax_first(scores: &[LogSumExp]) -> usize {
    let mut best = 0;
    let mut best_v = scores[0].value();
    for (c, s) in scores.iter().enumerate().skip(1) {
        let v = s.value();
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

/// k-NN by squared Euclidean distance. `query_batch` changes only the
/// access order and the point-load counter, never the labels.
pub fn knn_classify(rt: &Dataset, p: &Dataset, k: usize, query_batch: usize) -> Result<(Vec<usize>, InstanceReport)> {
    knn_classify_traced(rt, p, k, query_batch, None)
}

/// [`knn_classify`] recording a read of each reference point followed by
/// reads of the block's queries.
pub fn knn_classify_traced(
    rt: &Dataset,
    p: &Dataset,
    k: usize,
    query_batch: usize,
    trace: Option<&mut AccessTrace>,
) -> Result<(Vec<usize>, InstanceReport)> {
    check_k(k, rt)?;
    let consumers = Consumers {
        knn: Some((k, Vec::new())),
        prw: None,
    };
    let (labels, _, report) = run_pass(rt, p, query_batch, consumers, trace)?;
    Ok((labels.unwrap_or_default(), report))
}

/// Parzen-window classification: the class with the largest summed kernel
/// weight wins, ties to the smaller class id. Scores are kept in log space.
pub fn prw_classify(rt: &Dataset, p: &Dataset, kernel: &KernelSpec) -> Result<(Vec<usize>, InstanceReport)> {
    prw_classify_batched(rt, p, kernel, 1)
}

pub fn prw_classify_batched(
    rt: &Dataset,
    p: &Dataset,
    kernel: &KernelSpec,
    query_batch: usize,
) -> Result<(Vec<usize>, InstanceReport)> {
    kernel.validate()?;
    let consumers = Consumers {
        knn: None,
        prw: Some((kernel, Vec::new())),
    };
    let (_, labels, report) = run_pass(rt, p, query_batch, consumers, None)?;
    Ok((labels.unwrap_or_default(), report))
}

/// Per-class log scores `ln Σ exp(−d²/2h²)` for one query.
pub fn prw_log_scores(rt: &Dataset, x: &[f64], kernel: &KernelSpec) -> Result<Vec<f64>> {
    kernel.validate()?;
    check_dim(rt.n_features(), x.len())?;
    let classes = rt.require_classification()?;
    let mut acc = vec![LogSumExp::EMPTY; rt.n_classes()];
    for (j, &c) in classes.iter().enumerate() {
        acc[c].add(kernel.log_weight(squared_distance(x, rt.point(j))));
    }
    Ok(acc.iter().map(LogSumExp::value).collect())
}

/// Both classifiers in one pass; each distance is computed once.
pub fn joint_classify(
    rt: &Dataset,
    p: &Dataset,
    k: usize,
    kernel: &KernelSpec,
    query_batch: usize,
) -> Result<(Vec<usize>, Vec<usize>, InstanceReport)> {
    check_k(k, rt)?;
    kernel.validate()?;
    let consumers = Consumers {
        knn: Some((k, Vec::new())),
        prw: Some((kernel, Vec::new())),
    };
    let (knn, prw, report) = run_pass(rt, p, query_batch, consumers, None)?;
    Ok((knn.unwrap_or_default(), prw.unwrap_or_default(), report))
}

/// k-NN label for a single point against the reference rows `members`.
pub fn knn_predict_point(rt: &Dataset, members: &[usize], x: &[f64], k: usize) -> Result<usize> {
    check_dim(rt.n_features(), x.len())?;
    let classes = rt.require_classification()?;
    if k == 0 || k > members.len() {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", members.len())));
    }
    let mut list = NeighborList::new(k);
    for &j in members {
        list.offer(squared_distance(x, rt.point(j)), j);
    }
    Ok(list.vote(classes, rt.n_classes()))
}
