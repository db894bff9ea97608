//! Access traces, reuse distances and a trace-driven LRU cache model.
//!
//! Traces describe logical data objects (training points, model weights,
//! matrix entries), not byte addresses. Two reuse notions are reported:
//!
//! - *stack distance*: distinct elements touched between two accesses to
//!   the same element. This is what decides an LRU hit.
//! - *iteration gap*: the difference in step stamps between two accesses,
//!   i.e. how many loop iterations separate them when one event is emitted
//!   per iteration.
//!
//! For a uniform loop over `N` elements, the gap is `N` and the stack
//! distance `N - 1`. Use [`AccessTrace::project`] to restrict a trace to one
//! object before measuring, so that e.g. the reuse of a training point is
//! not inflated by interleaved model accesses.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::hash::Hash;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, BatchStream, ShuffleMode};
use crate::error::{Error, Result};

/// Namespace of a logical data object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub const TRAIN_SET: ObjectId = ObjectId(0);
    pub const MODEL: ObjectId = ObjectId(1);
    pub const QUERY_SET: ObjectId = ObjectId(2);
    pub const MATRIX_A: ObjectId = ObjectId(3);
    pub const MATRIX_B: ObjectId = ObjectId(4);

    pub fn name(self) -> String {
        match self {
            Self::TRAIN_SET => "TRAIN_SET".into(),
            Self::MODEL => "MODEL".into(),
            Self::QUERY_SET => "QUERY_SET".into(),
            Self::MATRIX_A => "MATRIX_A".into(),
            Self::MATRIX_B => "MATRIX_B".into(),
            ObjectId(n) => format!("OBJECT_{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    pub object: ObjectId,
    pub element: u64,
    pub kind: AccessKind,
    pub stamp: u64,
}

/// Labelled region of a trace starting at event index `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub label: String,
    pub start: usize,
}

/// Ordered access log. Also serves as the recorder handed to instrumented
/// learners: stamps are assigned on push and are the event's position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessTrace {
    events: Vec<AccessEvent>,
    phases: Vec<Phase>,
}

impl AccessTrace {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, object: ObjectId, element: u64, kind: AccessKind) {
        let stamp = self.events.len() as u64;
        self.events.push(AccessEvent {
            object,
            element,
            kind,
            stamp,
        });
    }

    #[inline]
    pub fn read(&mut self, object: ObjectId, element: u64) {
        self.push(object, element, AccessKind::Read);
    }

    #[inline]
    pub fn write(&mut self, object: ObjectId, element: u64) {
        self.push(object, element, AccessKind::Write);
    }

    pub fn begin_phase(&mut self, label: impl Into<String>) {
        self.phases.push(Phase {
            label: label.into(),
            start: self.events.len(),
        });
    }

    pub fn events(&self) -> &[AccessEvent] {
        &self.events
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event slices per phase, in order.
    pub fn phase_slices(&self) -> Vec<(&str, &[AccessEvent])> {
        self.phases
            .iter()
            .enumerate()
            .map(|(p, phase)| {
                let end = self.phases.get(p + 1).map_or(self.events.len(), |next| next.start);
                (phase.label.as_str(), &self.events[phase.start..end])
            })
            .collect()
    }

    /// Sub-trace of one object, re-stamped from zero. Phase boundaries are
    /// carried over to the corresponding projected positions.
    pub fn project(&self, object: ObjectId) -> AccessTrace {
        let mut out = AccessTrace::new();
        let mut phase_iter = self.phases.iter().peekable();
        for (pos, e) in self.events.iter().enumerate() {
            while let Some(p) = phase_iter.peek() {
                if p.start <= pos {
                    out.begin_phase(p.label.clone());
                    phase_iter.next();
                } else {
                    break;
                }
            }
            if e.object == object {
                out.push(e.object, e.element, e.kind);
            }
        }
        for p in phase_iter {
            out.begin_phase(p.label.clone());
        }
        out
    }

    pub fn objects(&self) -> Vec<ObjectId> {
        let mut ids: Vec<ObjectId> = self.events.iter().map(|e| e.object).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Counts accesses per (object, element).
    pub fn access_counts(&self) -> BTreeMap<(ObjectId, u64), u64> {
        let mut counts = BTreeMap::new();
        for e in &self.events {
            *counts.entry((e.object, e.element)).or_insert(0) += 1;
        }
        counts
    }
}

/// Min / max / mean of the stamp gaps between consecutive accesses to one
/// element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapStats {
    pub count: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReuseStats {
    /// Stack distance -> number of accesses with that distance.
    pub histogram: BTreeMap<u64, u64>,
    /// First-time accesses.
    pub cold_misses: u64,
    /// Stack distance of every access in trace order, `None` when cold.
    pub per_access: Vec<Option<u64>>,
    /// Stamp-gap statistics per (object, element) that was reused.
    pub gaps: BTreeMap<(ObjectId, u64), GapStats>,
}

impl ReuseStats {
    pub fn total(&self) -> u64 {
        self.histogram.values().sum::<u64>() + self.cold_misses
    }

    /// `distance,count` rows with a trailing `cold,<n>` row.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("distance,count\n");
        for (d, c) in &self.histogram {
            out.push_str(&format!("{d},{c}\n"));
        }
        out.push_str(&format!("cold,{}\n", self.cold_misses));
        out
    }
}

/// Fenwick tree over trace positions marking each key's latest access.
struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, pos: usize, delta: i64) {
        let mut i = pos + 1;
        while i < self.0.len() {
            self.0[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `0..pos`.
    fn prefix(&self, pos: usize) -> i64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Stack distance of every key in `keys`, in O(n log n).
pub fn stack_distances_by<K, I>(keys: I) -> Vec<Option<u64>>
where
    K: Hash + Eq,
    I: ExactSizeIterator<Item = K>,
{
    let n = keys.len();
    let mut tree = Fenwick::new(n);
    let mut last: HashMap<K, usize> = HashMap::with_capacity(n.min(1 << 16));
    let mut out = Vec::with_capacity(n);
    for (t, key) in keys.enumerate() {
        match last.insert(key, t) {
            Some(p) => {
                let between = tree.prefix(t) - tree.prefix(p + 1);
                out.push(Some(between as u64));
                tree.add(p, -1);
            }
            None => out.push(None),
        }
        tree.add(t, 1);
    }
    out
}

pub fn stack_distances(trace: &AccessTrace) -> Result<ReuseStats> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per_access = stack_distances_by(trace.events.iter().map(|e| (e.object, e.element)));
    let mut histogram = BTreeMap::new();
    let mut cold_misses = 0;
    for d in &per_access {
        match d {
            Some(d) => *histogram.entry(*d).or_insert(0) += 1,
            None => cold_misses += 1,
        }
    }

    let mut last_stamp: HashMap<(ObjectId, u64), u64> = HashMap::new();
    let mut acc: BTreeMap<(ObjectId, u64), (u64, u64, u64, u64)> = BTreeMap::new();
    for e in &trace.events {
        let key = (e.object, e.element);
        if let Some(prev) = last_stamp.insert(key, e.stamp) {
            let gap = e.stamp - prev;
            let s = acc.entry(key).or_insert((0, u64::MAX, 0, 0));
            s.0 += 1;
            s.1 = s.1.min(gap);
            s.2 = s.2.max(gap);
            s.3 += gap;
        }
    }
    let gaps = acc
        .into_iter()
        .map(|(k, (count, min, max, sum))| {
            (
                k,
                GapStats {
                    count,
                    min,
                    max,
                    mean: sum as f64 / count as f64,
                },
            )
        })
        .collect();

    Ok(ReuseStats {
        histogram,
        cold_misses,
        per_access,
        gaps,
    })
}

/// Fully-associative LRU cache geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Number of lines.
    pub capacity: usize,
    /// Consecutive element indices of one object that share a line.
    pub line_size: usize,
}

impl CacheConfig {
    pub fn new(capacity: usize, line_size: usize) -> Result<Self> {
        let c = Self { capacity, line_size };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::invalid("cache capacity must be at least one line"));
        }
        if self.line_size == 0 {
            return Err(Error::invalid("cache line size must be at least one element"));
        }
        Ok(())
    }

    #[inline]
    fn line_of(&self, e: &AccessEvent) -> (ObjectId, u64) {
        (e.object, e.element / self.line_size as u64)
    }
}

/// Per-access cycle costs. The defaults are 4 cycles for a cache hit and 40
/// for a main-memory access.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub hit_cycles: u64,
    pub miss_cycles: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            hit_cycles: 4,
            miss_cycles: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub cost_cycles: u64,
    /// Misses broken down by object id.
    pub misses_by_object: BTreeMap<u32, u64>,
}

pub fn simulate_cache(trace: &AccessTrace, config: &CacheConfig, cost: CostModel) -> Result<CacheStats> {
    config.validate()?;
    let mut resident: HashMap<(ObjectId, u64), u64> = HashMap::new();
    let mut by_age: BTreeMap<u64, (ObjectId, u64)> = BTreeMap::new();
    let (mut hits, mut misses) = (0u64, 0u64);
    let mut misses_by_object = BTreeMap::new();

    for (t, e) in trace.events.iter().enumerate() {
        let line = config.line_of(e);
        let now = t as u64;
        match resident.insert(line, now) {
            Some(prev) => {
                hits += 1;
                by_age.remove(&prev);
            }
            None => {
                misses += 1;
                *misses_by_object.entry(e.object.0).or_insert(0) += 1;
                if resident.len() > config.capacity {
                    let (_, victim) = by_age.pop_first().expect("cache non-empty");
                    resident.remove(&victim);
                }
            }
        }
        by_age.insert(now, line);
    }
    let total = hits + misses;
    Ok(CacheStats {
        hits,
        misses,
        hit_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        cost_cycles: cost.hit_cycles * hits + cost.miss_cycles * misses,
        misses_by_object,
    })
}

/// Line-granular stack distances; an access hits an LRU cache of `c` lines
/// exactly when its line distance is `< c`.
pub fn line_stack_distances(trace: &AccessTrace, line_size: usize) -> Result<Vec<Option<u64>>> {
    let config = CacheConfig::new(1, line_size)?;
    Ok(stack_distances_by(trace.events.iter().map(|e| config.line_of(e))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopOrder {
    /// Row index outermost.
    Ij,
    /// Column index outermost.
    Ji,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    ColumnMajor,
    RowMajor,
}

/// Trace of `A[i,j] = B[i-1,j] + B[i,j] + B[i+1,j]` for `i in 1..=n`,
/// `j in 1..=m`. Both matrices are `(n + 2) x m` so the halo rows exist;
/// every iteration emits three reads of `B` and one write of `A`.
pub fn gen_stencil_trace(n: usize, m: usize, order: LoopOrder, layout: Layout) -> Result<AccessTrace> {
    if n < 2 || m < 2 {
        return Err(Error::invalid(format!("stencil needs N, M >= 2, got {n}x{m}")));
    }
    let rows = n + 2;
    let index = |i: usize, j: usize| -> u64 {
        let jj = j - 1;
        match layout {
            Layout::ColumnMajor => (i + jj * rows) as u64,
            Layout::RowMajor => (i * m + jj) as u64,
        }
    };
    let mut trace = AccessTrace::new();
    let body = |i: usize, j: usize, trace: &mut AccessTrace| {
        trace.read(ObjectId::MATRIX_B, index(i - 1, j));
        trace.read(ObjectId::MATRIX_B, index(i, j));
        trace.read(ObjectId::MATRIX_B, index(i + 1, j));
        trace.write(ObjectId::MATRIX_A, index(i, j));
    };
    match order {
        LoopOrder::Ij => {
            for i in 1..=n {
                for j in 1..=m {
                    body(i, j, &mut trace);
                }
            }
        }
        LoopOrder::Ji => {
            for j in 1..=m {
                for i in 1..=n {
                    body(i, j, &mut trace);
                }
            }
        }
    }
    Ok(trace)
}

/// Data touches of mini-batch gradient descent. Per point: read the point,
/// read the model. Per batch: write the model. The model is a single
/// logical element.
pub fn gen_sgd_trace(
    n_points: usize,
    epochs: usize,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Result<AccessTrace> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    let mode = if shuffle {
        ShuffleMode::PerEpochShuffle
    } else {
        ShuffleMode::FixedOrder
    };
    let mut trace = AccessTrace::new();
    for batch in BatchStream::new(n_points, batch_size, epochs, mode, seed)? {
        for &t in &batch.indices {
            trace.read(ObjectId::TRAIN_SET, t as u64);
            trace.read(ObjectId::MODEL, 0);
        }
        trace.write(ObjectId::MODEL, 0);
    }
    Ok(trace)
}

/// Data touches of brute-force k-NN with query batching: queries are taken
/// `query_batch` at a time, each remembered point is loaded once per batch
/// and then compared against every query in the batch.
pub fn gen_knn_trace(n_train: usize, n_query: usize, query_batch: usize) -> Result<AccessTrace> {
    if n_train == 0 || n_query == 0 || query_batch == 0 {
        return Err(Error::invalid("k-NN trace sizes must be at least 1"));
    }
    let mut trace = AccessTrace::new();
    for start in (0..n_query).step_by(query_batch) {
        let end = (start + query_batch).min(n_query);
        for j in 0..n_train {
            trace.read(ObjectId::TRAIN_SET, j as u64);
            for q in start..end {
                trace.read(ObjectId::QUERY_SET, q as u64);
            }
        }
    }
    Ok(trace)
}

/// Training-set traffic of one round of k-fold cross-validation.
///
/// Naive: for each held-out fold `i`, phase `train:i` reads every point of
/// the other folds (fold by fold, ascending), then phase `test:i` reads fold
/// `i`. Streamed: phase `sweep` reads each fold once (it is dispatched to
/// all learners that train on it), followed by the `test:i` phases.
pub fn gen_cv_trace(n_points: usize, k: usize, streamed: bool, seed: u64) -> Result<AccessTrace> {
    let folds = data::partition_folds(n_points, k, seed)?;
    let members: Vec<Vec<usize>> = (0..k).map(|f| folds.fold(f)).collect();
    let mut trace = AccessTrace::new();
    let read_fold = |trace: &mut AccessTrace, f: usize| {
        for &p in &members[f] {
            trace.read(ObjectId::TRAIN_SET, p as u64);
        }
    };
    if streamed {
        trace.begin_phase("sweep");
        for f in 0..k {
            read_fold(&mut trace, f);
        }
        for i in 0..k {
            trace.begin_phase(format!("test:{i}"));
            read_fold(&mut trace, i);
        }
    } else {
        for i in 0..k {
            trace.begin_phase(format!("train:{i}"));
            for f in (0..k).filter(|&f| f != i) {
                read_fold(&mut trace, f);
            }
            trace.begin_phase(format!("test:{i}"));
            read_fold(&mut trace, i);
        }
    }
    Ok(trace)
}

/// Training-set reads of `n_boot` bootstrap samples, one phase per sample.
pub fn gen_bootstrap_trace(n_points: usize, n_boot: usize, seed: u64) -> Result<AccessTrace> {
    if n_boot == 0 {
        return Err(Error::invalid("need at least one bootstrap sample"));
    }
    let mut trace = AccessTrace::new();
    for b in 0..n_boot {
        trace.begin_phase(format!("boot:{b}"));
        for i in data::bootstrap_indices(n_points, crate::rng::derive(seed, b as u64))? {
            trace.read(ObjectId::TRAIN_SET, i as u64);
        }
    }
    Ok(trace)
}

const RECORD_LEN: usize = 4 + 8 + 1 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    record_bytes: usize,
    n_events: usize,
    namespaces: BTreeMap<u32, String>,
    phases: Vec<Phase>,
}

/// Path of the JSON sidecar that accompanies a binary trace file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Encodes events as little-endian records
/// `(object: u32, element: u64, kind: u8, stamp: u64)`; kind 0 = read, 1 = write.
pub fn encode_events(trace: &AccessTrace) -> Vec<u8> {
    let mut out = Vec::with_capacity(trace.len() * RECORD_LEN);
    for e in &trace.events {
        out.extend_from_slice(&e.object.0.to_le_bytes());
        out.extend_from_slice(&e.element.to_le_bytes());
        out.push(match e.kind {
            AccessKind::Read => 0,
            AccessKind::Write => 1,
        });
        out.extend_from_slice(&e.stamp.to_le_bytes());
    }
    out
}

pub fn decode_events(bytes: &[u8]) -> Result<Vec<AccessEvent>> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(Error::TraceFormat(format!(
            "length {} is not a multiple of {RECORD_LEN}",
            bytes.len()
        )));
    }
    let mut events = Vec::with_capacity(bytes.len() / RECORD_LEN);
    let mut last: Option<u64> = None;
    for rec in bytes.chunks_exact(RECORD_LEN) {
        let object = u32::from_le_bytes(rec[0..4].try_into().unwrap());
        let element = u64::from_le_bytes(rec[4..12].try_into().unwrap());
        let kind = match rec[12] {
            0 => AccessKind::Read,
            1 => AccessKind::Write,
            k => return Err(Error::TraceFormat(format!("unknown access kind {k}"))),
        };
        let stamp = u64::from_le_bytes(rec[13..21].try_into().unwrap());
        if last.is_some_and(|l| stamp <= l) {
            return Err(Error::TraceFormat("stamps not strictly increasing".into()));
        }
        last = Some(stamp);
        events.push(AccessEvent {
            object: ObjectId(object),
            element,
            kind,
            stamp,
        });
    }
    Ok(events)
}

pub fn write_trace(trace: &AccessTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_events(trace))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar {
        format: "access-trace-v1".into(),
        record_bytes: RECORD_LEN,
        n_events: trace.len(),
        namespaces: trace.objects().into_iter().map(|o| (o.0, o.name())).collect(),
        phases: trace.phases.clone(),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<AccessTrace> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .map(BufReader::new)
        .and_then(|mut r| r.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let events = decode_events(&bytes)?;
    let side = sidecar_path(path);
    let phases = match std::fs::read_to_string(&side) {
        Ok(text) => {
            let sidecar: Sidecar = serde_json::from_str(&text)?;
            if sidecar.n_events != events.len() {
                return Err(Error::TraceFormat(format!(
                    "sidecar announces {} events, file holds {}",
                    sidecar.n_events,
                    events.len()
                )));
            }
            sidecar.phases
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(side, e)),
    };
    Ok(AccessTrace { events, phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn trace_of(elems: &[u64]) -> AccessTrace {
        let mut t = AccessTrace::new();
        for &e in elems {
            t.read(ObjectId::TRAIN_SET, e);
        }
        t
    }

    /// Quadratic oracle: count distinct keys strictly between the two accesses.
    fn brute_force(trace: &AccessTrace) -> Vec<Option<u64>> {
        let ev = trace.events();
        (0..ev.len())
            .map(|t| {
                let key = (ev[t].object, ev[t].element);
                let prev = (0..t).rev().find(|&p| (ev[p].object, ev[p].element) == key)?;
                let distinct: HashSet<_> = ev[prev + 1..t].iter().map(|e| (e.object, e.element)).collect();
                Some(distinct.len() as u64)
            })
            .collect()
    }

    #[test]
    fn basic_stack_distances() {
        let s = stack_distances(&trace_of(&[0, 1, 0])).unwrap();
        assert_eq!(s.per_access, vec![None, None, Some(1)]);
        let s = stack_distances(&trace_of(&[5, 5])).unwrap();
        assert_eq!(s.per_access, vec![None, Some(0)]);
        assert_eq!(s.total(), 2);
        assert!(stack_distances(&AccessTrace::new()).is_err());
    }

    #[test]
    fn gaps_are_stamp_differences() {
        let s = stack_distances(&trace_of(&[1, 2, 3, 1, 1])).unwrap();
        let g = s.gaps[&(ObjectId::TRAIN_SET, 1)];
        assert_eq!((g.count, g.min, g.max), (2, 1, 3));
        assert_eq!(g.mean, 2.0);
    }

    #[test]
    fn objects_are_separate_namespaces() {
        let mut t = AccessTrace::new();
        t.read(ObjectId::TRAIN_SET, 0);
        t.read(ObjectId::MODEL, 0);
        t.read(ObjectId::TRAIN_SET, 0);
        let s = stack_distances(&t).unwrap();
        assert_eq!(s.per_access, vec![None, None, Some(1)]);
    }

    #[test]
    fn idealized_scan_cost() {
        let mut t = AccessTrace::new();
        for _ in 0..100 {
            for e in 0..100 {
                t.read(ObjectId::TRAIN_SET, e);
            }
        }
        let c = simulate_cache(&t, &CacheConfig::new(100, 1).unwrap(), CostModel::default()).unwrap();
        assert_eq!(c.misses, 100);
        assert_eq!(c.cost_cycles, 100 * 40 + 9900 * 4);
        assert_eq!(c.cost_cycles, 43_600);
    }

    #[test]
    fn thrashing_single_line() {
        let t = trace_of(&[0, 1, 0, 1, 0, 1]);
        let c = simulate_cache(&t, &CacheConfig::new(1, 1).unwrap(), CostModel::default()).unwrap();
        assert_eq!(c.hits, 0);
        assert_eq!(c.hit_rate, 0.0);
        assert!(CacheConfig::new(0, 1).is_err());
        assert!(CacheConfig::new(1, 0).is_err());
    }

    #[test]
    fn line_size_groups_neighbours() {
        let t = trace_of(&[0, 1, 2, 3]);
        let c = simulate_cache(&t, &CacheConfig::new(4, 4).unwrap(), CostModel::default()).unwrap();
        assert_eq!((c.hits, c.misses), (3, 1));
    }

    #[test]
    fn stencil_shapes_and_locality() {
        for order in [LoopOrder::Ij, LoopOrder::Ji] {
            assert_eq!(
                gen_stencil_trace(5, 7, order, Layout::ColumnMajor).unwrap().len(),
                4 * 5 * 7
            );
        }
        assert!(gen_stencil_trace(1, 7, LoopOrder::Ij, Layout::ColumnMajor).is_err());

        // reuse of B: O(1) distinct elements in ji order, O(M) in ij order
        let max_b_distance = |order| {
            let t = gen_stencil_trace(16, 16, order, Layout::ColumnMajor).unwrap();
            let s = stack_distances(&t).unwrap();
            t.events()
                .iter()
                .zip(&s.per_access)
                .filter(|(e, _)| e.object == ObjectId::MATRIX_B)
                .filter_map(|(_, d)| *d)
                .max()
                .unwrap()
        };
        assert!(max_b_distance(LoopOrder::Ji) <= 3);
        assert!(max_b_distance(LoopOrder::Ij) >= 16);

        let cfg = CacheConfig::new(8, 4).unwrap();
        let rate = |order| {
            let t = gen_stencil_trace(16, 16, order, Layout::ColumnMajor).unwrap();
            simulate_cache(&t, &cfg, CostModel::default()).unwrap().hit_rate
        };
        assert!(rate(LoopOrder::Ji) > rate(LoopOrder::Ij));
    }

    #[test]
    fn sgd_trace_reuse() {
        let t = gen_sgd_trace(10, 2, 1, false, 0).unwrap();
        let train = t.project(ObjectId::TRAIN_SET);
        let s = stack_distances(&train).unwrap();
        assert_eq!(s.cold_misses, 10);
        assert_eq!(s.histogram, BTreeMap::from([(9, 10)]));
        assert!(s.gaps.values().all(|g| g.min == 10 && g.max == 10));
    }

    #[test]
    fn knn_trace_reuse() {
        let t = gen_knn_trace(5, 3, 1).unwrap();
        let counts = t.project(ObjectId::TRAIN_SET).access_counts();
        assert!(counts.values().all(|&c| c == 3));
        let rt = stack_distances(&t.project(ObjectId::TRAIN_SET)).unwrap();
        assert_eq!(rt.histogram, BTreeMap::from([(4, 10)]));
        let q = stack_distances(&t.project(ObjectId::QUERY_SET)).unwrap();
        assert!(q.gaps.values().all(|g| g.min == 1 && g.max == 1));
    }

    #[test]
    fn cv_trace_read_counts() {
        let naive = gen_cv_trace(12, 3, false, 4).unwrap();
        let streamed = gen_cv_trace(12, 3, true, 4).unwrap();
        let training = |t: &AccessTrace| -> usize {
            t.phase_slices()
                .iter()
                .filter(|(l, _)| !l.starts_with("test"))
                .map(|(_, s)| s.len())
                .sum()
        };
        assert_eq!(training(&naive), 2 * 12);
        assert_eq!(training(&streamed), 12);
        let sweep = &streamed.phase_slices()[0].1;
        let distinct: HashSet<u64> = sweep.iter().map(|e| e.element).collect();
        assert_eq!(distinct.len(), 12);
    }

    #[test]
    fn projection_keeps_phases() {
        let mut t = AccessTrace::new();
        t.begin_phase("a");
        t.read(ObjectId::MODEL, 0);
        t.read(ObjectId::TRAIN_SET, 1);
        t.begin_phase("b");
        t.read(ObjectId::TRAIN_SET, 2);
        let p = t.project(ObjectId::TRAIN_SET);
        assert_eq!(p.len(), 2);
        assert_eq!(p.events()[1].stamp, 1);
        let phases: Vec<_> = p.phase_slices().iter().map(|(l, s)| (l.to_string(), s.len())).collect();
        assert_eq!(phases, vec![("a".to_string(), 1), ("b".to_string(), 1)]);
    }

    #[test]
    fn trace_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cv.trace");
        let t = gen_cv_trace(9, 3, false, 2).unwrap();
        write_trace(&t, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, t.len() * 21);
        assert_eq!(read_trace(&path).unwrap(), t);
    }

    #[test]
    fn record_layout_is_little_endian() {
        let mut t = AccessTrace::new();
        t.write(ObjectId(0x0102_0304), 5);
        let b = encode_events(&t);
        assert_eq!(&b[0..4], &[4, 3, 2, 1]);
        assert_eq!(&b[4..12], &5u64.to_le_bytes());
        assert_eq!(b[12], 1);
        assert_eq!(&b[13..21], &0u64.to_le_bytes());
        assert!(decode_events(&b[..20]).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(elems in proptest::collection::vec(0u64..40, 1..400)) {
            let t = trace_of(&elems);
            let s = stack_distances(&t).unwrap();
            prop_assert_eq!(&s.per_access, &brute_force(&t));
            prop_assert_eq!(s.total() as usize, t.len());
        }

        #[test]
        fn lru_inclusion(elems in proptest::collection::vec(0u64..64, 1..500), line in 1usize..4) {
            let t = trace_of(&elems);
            let dist = line_stack_distances(&t, line).unwrap();
            let mut prev = 0;
            for cap in [1usize, 2, 4, 8, 16, 32, 64] {
                let c = simulate_cache(&t, &CacheConfig::new(cap, line).unwrap(), CostModel::default()).unwrap();
                prop_assert!(c.hits >= prev);
                prev = c.hits;
                // an access hits iff its line stack distance is below the capacity
                let predicted = dist.iter().filter(|d| d.is_some_and(|d| (d as usize) < cap)).count() as u64;
                prop_assert_eq!(c.hits, predicted);
            }
        }
    }
}
