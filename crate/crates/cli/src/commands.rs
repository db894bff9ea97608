//! The subcommands. Each resolves its parameters, runs, and writes one
//! payload plus one timing file.

use std::path::PathBuf;
use std::time::Instant;

use ml_locality::data::{generate_blobs, load_csv, LabelKind, ShuffleMode};
use ml_locality::ensemble::{cross_validate, cross_validate_streamed, LinearSgdLearner, SgdSettings};
use ml_locality::instance::{joint_classify, knn_classify, prw_classify_batched, KernelSpec};
use ml_locality::linear::{LinearModel, LinearObjective, LossKind};
use ml_locality::nn::{Matrix, Mlp, OutputHead};
use ml_locality::optim::{train_swsgd, OptimizerConfig, UpdateRule};
use ml_locality::trace::{
    gen_bootstrap_trace, gen_cv_trace, gen_knn_trace, gen_sgd_trace, gen_stencil_trace, simulate_cache,
    stack_distances, write_trace, AccessTrace, CacheConfig, CostModel, Layout, LoopOrder, ObjectId,
};
use ml_locality::{rng, Dataset, Error};
use rand::Rng as _;
use serde_json::{json, Value};

use crate::config::{Format, Params, RunConfig};
use crate::output::{csv_preamble, timed, timed_pair, write_file, write_meta, write_payload, Payload, Table};
use crate::{CliError, Command};

pub fn dispatch(command: Command, cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::SwsgdBench => swsgd_bench(cfg),
        Command::JointInstanceBench => joint_instance_bench(cfg),
        Command::CvBench => cv_bench(cfg),
        Command::Trace => trace(cfg),
        Command::GradCheck => grad_check(cfg),
        Command::DataGen => data_gen(cfg),
    }
}

/// Class centres for synthetic blobs. Two classes sit at `∓separation/2`
/// on every feature; with more classes, class `c` is offset by
/// `separation` on the features `i` with `i mod n_classes = c`.
pub fn blob_centers(n_classes: usize, n_features: usize, separation: f64) -> Vec<Vec<f64>> {
    if n_classes == 2 {
        let h = separation / 2.0;
        return vec![vec![-h; n_features], vec![h; n_features]];
    }
    (0..n_classes)
        .map(|c| {
            (0..n_features)
                .map(|i| if i % n_classes == c { separation } else { 0.0 })
                .collect()
        })
        .collect()
}

struct BlobDefaults {
    n_points: usize,
    n_classes: usize,
    n_features: usize,
    sigma: f64,
    separation: f64,
}

struct BlobSpec {
    n_classes: usize,
    n_features: usize,
    sigma: f64,
    separation: f64,
}

impl BlobSpec {
    fn read(p: &mut Params, d: &BlobDefaults) -> Result<Self, CliError> {
        Ok(Self {
            n_classes: p.get("n_classes", d.n_classes)?,
            n_features: p.get("n_features", d.n_features)?,
            sigma: p.get("sigma", d.sigma)?,
            separation: p.get("separation", d.separation)?,
        })
    }

    fn generate(&self, n_points: usize, seed: u64) -> Result<Dataset, CliError> {
        if self.n_classes == 0 || n_points < self.n_classes {
            return Err(CliError::Config(format!(
                "need at least one point per class ({} points, {} classes)",
                n_points, self.n_classes
            )));
        }
        let centers = blob_centers(self.n_classes, self.n_features, self.separation);
        let per_class = n_points.div_ceil(self.n_classes);
        let d = generate_blobs(per_class, self.n_classes, self.n_features, &centers, self.sigma, seed)?;
        Ok(d.subset(&(0..n_points).collect::<Vec<_>>())?)
    }
}

/// Training data from the configured source: blobs by default, or a CSV.
fn load_training(cfg: &RunConfig, p: &mut Params, d: &BlobDefaults, seed: u64) -> Result<Dataset, CliError> {
    match cfg.dataset_path() {
        None => {
            let n = p.get("n_points", d.n_points)?;
            BlobSpec::read(p, d)?.generate(n, seed)
        }
        Some(path) => load_csv_param(path, p),
    }
}

fn load_csv_param(path: &std::path::Path, p: &mut Params) -> Result<Dataset, CliError> {
    let has_header = p.get("has_header", true)?;
    let label = p.get_str("label_column", "last");
    let column = if label == "last" {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        let first = text
            .lines()
            .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .ok_or(Error::EmptyInput)?;
        first.split(',').count().saturating_sub(1)
    } else {
        label
            .parse()
            .map_err(|e| CliError::Config(format!("label_column = {label:?}: {e}")))?
    };
    Ok(load_csv(path, column, LabelKind::Classification, has_header)?)
}

fn finish(cfg: &mut RunConfig, p: Params) -> Result<(), CliError> {
    cfg.params = p.finish()?;
    Ok(())
}

fn f(v: f64) -> Value {
    json!(v)
}

fn swsgd_bench(mut cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut p = Params::new(&cfg.params);
    let names: Vec<String> = p.get_list("optimizers", "vanilla,momentum,adagrad,adam")?;
    let windows: Vec<usize> = p.get_list("windows", "0,1,2")?;
    let epochs = p.get("epochs", 10usize)?;
    let batch_size = p.get("batch_size", 16usize)?;
    let base_step = p.get("step_size", 0.05f64)?;
    let weight_decay = p.get("weight_decay", 0.0f64)?;
    let mut rules = Vec::new();
    for name in &names {
        let rule = UpdateRule::from_name(name)?;
        let step = p.get(&format!("step_size.{}", rule.name()), base_step)?;
        rules.push((rule, step));
    }
    let defaults = BlobDefaults {
        n_points: 2000,
        n_classes: 2,
        n_features: 20,
        sigma: 1.0,
        separation: 0.5,
    };
    let data_seed = p.get("data_seed", cfg.seed())?;
    let data = load_training(&cfg, &mut p, &defaults, data_seed)?;
    finish(&mut cfg, p)?;
    let objective = LinearObjective {
        loss: LossKind::Logistic,
        bias: false,
    };

    let mut table = Table::new(&[
        "seed",
        "optimizer",
        "window",
        "epoch",
        "mean_loss",
        "point_loads",
        "grad_evals",
        "status",
    ]);
    let mut timings = Vec::new();
    for &seed in &cfg.seeds {
        for &(rule, step_size) in &rules {
            for &w in &windows {
                let config = OptimizerConfig {
                    batch_size,
                    epochs,
                    step_size,
                    rule,
                    weight_decay,
                    window_batches: w,
                    shuffle: ShuffleMode::PerEpochShuffle,
                    seed,
                };
                let start = Instant::now();
                let result = train_swsgd(vec![0.0; data.n_features()], &objective, &data, &config);
                timings.push(json!({
                    "seed": seed, "optimizer": rule.name(), "window": w,
                    "elapsed_ns": start.elapsed().as_nanos() as u64,
                }));
                match result {
                    Ok((_, report)) => {
                        for r in &report.epochs {
                            table.push(vec![
                                json!(seed),
                                json!(rule.name()),
                                json!(w),
                                json!(r.epoch + 1),
                                f(r.mean_loss),
                                json!(r.point_loads),
                                json!(r.grad_evals),
                                json!("ok"),
                            ]);
                        }
                    }
                    Err(Error::Divergence { epoch }) => {
                        for e in 0..epochs {
                            let status = if e < epoch { "ok-before-divergence" } else { "diverged" };
                            table.push(vec![
                                json!(seed),
                                json!(rule.name()),
                                json!(w),
                                json!(e + 1),
                                Value::Null,
                                Value::Null,
                                Value::Null,
                                json!(status),
                            ]);
                        }
                    }
                    Err(other) => return Err(other.into()),
                }
            }
        }
    }
    let payload = write_payload(&cfg, &Payload::from(table))?;
    let meta = write_meta(&cfg, json!({ "cells": timings }))?;
    Ok(vec![payload, meta])
}

#[derive(Debug, Clone, PartialEq)]
struct InstanceRun {
    knn: Vec<usize>,
    prw: Vec<usize>,
    knn_report: ml_locality::InstanceReport,
    prw_report: ml_locality::InstanceReport,
}

fn joint_instance_bench(mut cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut p = Params::new(&cfg.params);
    let k = p.get("k", 5usize)?;
    let bandwidth = p.get("bandwidth", 1.0f64)?;
    let query_batch = p.get("query_batch", 64usize)?;
    let kernel = KernelSpec::gaussian(bandwidth)?;
    let load_start = Instant::now();
    let (rt, queries) = match cfg.dataset_path() {
        None => {
            let n_train = p.get("n_train", 5000usize)?;
            let n_query = p.get("n_query", 500usize)?;
            let spec = BlobSpec::read(
                &mut p,
                &BlobDefaults {
                    n_points: 0,
                    n_classes: 3,
                    n_features: 20,
                    sigma: 1.0,
                    separation: 2.0,
                },
            )?;
            (
                spec.generate(n_train, cfg.seed())?,
                spec.generate(n_query, rng::derive(cfg.seed(), 1))?,
            )
        }
        Some(path) => {
            let fraction = p.get("test_fraction", 0.1f64)?;
            load_csv_param(path, &mut p)?.split(fraction, cfg.seed())?
        }
    };
    let load_ns = load_start.elapsed().as_nanos() as u64;
    finish(&mut cfg, p)?;

    let ((separate, separate_ns), ((jk, jp, joint), joint_ns)) = timed_pair(
        cfg.repeat,
        || {
            let (knn, knn_report) = knn_classify(&rt, &queries, k, query_batch)?;
            let (prw, prw_report) = prw_classify_batched(&rt, &queries, &kernel, query_batch)?;
            Ok(InstanceRun {
                knn,
                prw,
                knn_report,
                prw_report,
            })
        },
        || Ok(joint_classify(&rt, &queries, k, &kernel, query_batch)?),
    )?;
    let labels_equal = jk == separate.knn && jp == separate.prw;
    let sep_total = separate.knn_report.merged(separate.prw_report);

    let acc = |labels: &[usize]| {
        labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| l == queries.class(i))
            .count() as f64
            / labels.len() as f64
    };
    let mut table = Table::new(&[
        "mode",
        "distance_computations",
        "point_loads",
        "knn_accuracy",
        "prw_accuracy",
    ]);
    let counters = |r: &ml_locality::InstanceReport| json!({ "distance_computations": r.distance_computations, "point_loads": r.point_loads });
    for (mode, r) in [
        ("separate-knn", &separate.knn_report),
        ("separate-prw", &separate.prw_report),
        ("separate", &sep_total),
        ("joint", &joint),
    ] {
        table.push(vec![
            json!(mode),
            json!(r.distance_computations),
            json!(r.point_loads),
            f(acc(&separate.knn)),
            f(acc(&separate.prw)),
        ]);
    }
    let document = json!({
        "separate": {
            "knn": counters(&separate.knn_report),
            "prw": counters(&separate.prw_report),
            "distance_computations": sep_total.distance_computations,
            "point_loads": sep_total.point_loads,
        },
        "joint": counters(&joint),
        "labels_equal": labels_equal,
        "knn_accuracy": acc(&separate.knn),
        "prw_accuracy": acc(&separate.prw),
    });
    let payload = write_payload(
        &cfg,
        &Payload {
            table,
            document: Some(document),
        },
    )?;
    let meta = write_meta(
        &cfg,
        json!({
            "load_s": load_ns as f64 * 1e-9,
            "separate_test_s": separate_ns as f64 * 1e-9,
            "joint_test_s": joint_ns as f64 * 1e-9,
            "joint_over_separate": joint_ns as f64 / separate_ns as f64,
            "repeat": cfg.repeat,
        }),
    )?;
    if !labels_equal {
        return Err(CliError::Check("joint labels differ from separate labels".into()));
    }
    Ok(vec![payload, meta])
}

fn cv_bench(mut cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut p = Params::new(&cfg.params);
    let k = p.get("k", 5usize)?;
    let loss = match p.get_str("loss", "hinge").as_str() {
        "hinge" => LossKind::Hinge,
        "logistic" => LossKind::Logistic,
        other => {
            return Err(CliError::Config(format!(
                "loss must be hinge or logistic, got {other:?}"
            )))
        }
    };
    let settings = SgdSettings {
        loss,
        bias: true,
        epochs: p.get("epochs", 3usize)?,
        batch_size: p.get("batch_size", 16usize)?,
        step_size: p.get("step_size", 0.05f64)?,
        weight_decay: p.get("weight_decay", 0.0f64)?,
        rule: UpdateRule::from_name(&p.get_str("optimizer", "vanilla"))?,
    };
    let defaults = BlobDefaults {
        n_points: 1000,
        n_classes: 2,
        n_features: 10,
        sigma: 1.0,
        separation: 1.0,
    };
    let data = load_training(&cfg, &mut p, &defaults, cfg.seed())?;
    finish(&mut cfg, p)?;
    let factory = |s| LinearSgdLearner::new(settings, s);

    let mut table = Table::new(&[
        "seed",
        "mode",
        "k",
        "epochs",
        "mean_accuracy",
        "point_loads",
        "load_ratio",
    ]);
    let mut timings = Vec::new();
    for &seed in &cfg.seeds {
        let (naive, naive_ns) = timed(cfg.repeat, || Ok(cross_validate(&factory, &data, k, seed)?))?;
        let (streamed, streamed_ns) = timed(cfg.repeat, || {
            Ok(cross_validate_streamed(
                &factory,
                &data,
                k,
                settings.epochs,
                settings.batch_size,
                seed,
            )?)
        })?;
        let ratio = naive.point_loads as f64 / streamed.point_loads as f64;
        for (mode, r) in [("naive", &naive), ("streamed", &streamed)] {
            table.push(vec![
                json!(seed),
                json!(mode),
                json!(k),
                json!(settings.epochs),
                f(r.mean_accuracy),
                json!(r.point_loads),
                f(ratio),
            ]);
        }
        timings
            .push(json!({ "seed": seed, "naive_s": naive_ns as f64 * 1e-9, "streamed_s": streamed_ns as f64 * 1e-9 }));
    }
    let payload = write_payload(&cfg, &Payload::from(table))?;
    let meta = write_meta(&cfg, json!({ "runs": timings, "repeat": cfg.repeat }))?;
    Ok(vec![payload, meta])
}

struct TraceRows<'a> {
    table: &'a mut Table,
    scenario: &'static str,
}

impl TraceRows<'_> {
    fn push(&mut self, variant: &str, metric: &str, value: Value) {
        self.table
            .push(vec![json!(self.scenario), json!(variant), json!(metric), value]);
    }

    fn cache(&mut self, variant: &str, t: &AccessTrace, cache: &CacheConfig) -> Result<(), CliError> {
        let s = simulate_cache(t, cache, CostModel::default())?;
        self.push(variant, "accesses", json!(t.len()));
        self.push(variant, "hits", json!(s.hits));
        self.push(variant, "misses", json!(s.misses));
        self.push(variant, "hit_rate", f(s.hit_rate));
        self.push(variant, "cost_cycles", json!(s.cost_cycles));
        Ok(())
    }

    /// Extremes of the stack distance and iteration gap within one object.
    fn reuse(&mut self, variant: &str, t: &AccessTrace, object: ObjectId) -> Result<(), CliError> {
        let stats = stack_distances(&t.project(object))?;
        let name = object.name();
        let first = stats.histogram.keys().next().copied();
        let last = stats.histogram.keys().next_back().copied();
        self.push(variant, &format!("{name}.min_stack_distance"), json!(first));
        self.push(variant, &format!("{name}.max_stack_distance"), json!(last));
        let gaps = stats.gaps.values().filter(|g| g.count > 0);
        let min_gap = gaps.clone().map(|g| g.min).min();
        let max_gap = gaps.map(|g| g.max).max();
        self.push(variant, &format!("{name}.min_iteration_gap"), json!(min_gap));
        self.push(variant, &format!("{name}.max_iteration_gap"), json!(max_gap));
        self.push(variant, &format!("{name}.cold_misses"), json!(stats.cold_misses));
        Ok(())
    }
}

fn trace(mut cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut p = Params::new(&cfg.params);
    let scenarios: Vec<String> = p.get_list("scenarios", "stencil,sgd,knn,cv,bootstrap")?;
    let cache = CacheConfig::new(p.get("cache_lines", 64usize)?, p.get("line_size", 4usize)?)?;
    let n = p.get("n", 64usize)?;
    let m = p.get("m", 64usize)?;
    let sgd_points = p.get("sgd_points", 100usize)?;
    let sgd_epochs = p.get("sgd_epochs", 3usize)?;
    let sgd_batch = p.get("sgd_batch", 10usize)?;
    let sgd_shuffle = p.get("sgd_shuffle", false)?;
    let knn_train = p.get("knn_train", 200usize)?;
    let knn_query = p.get("knn_query", 20usize)?;
    let knn_batch = p.get("knn_batch", 4usize)?;
    let cv_points = p.get("cv_points", 100usize)?;
    let cv_k = p.get("cv_k", 5usize)?;
    let boot_points = p.get("boot_points", 100usize)?;
    let boot_samples = p.get("boot_samples", 5usize)?;
    let write_traces = p.get("write_traces", false)?;
    finish(&mut cfg, p)?;
    let seed = cfg.seed();

    let mut table = Table::new(&["scenario", "variant", "metric", "value"]);
    let mut traces: Vec<(String, AccessTrace)> = Vec::new();
    let start = Instant::now();
    for scenario in &scenarios {
        match scenario.as_str() {
            "stencil" => {
                let mut rows = TraceRows {
                    table: &mut table,
                    scenario: "stencil",
                };
                for (variant, order) in [("ij", LoopOrder::Ij), ("ji", LoopOrder::Ji)] {
                    let t = gen_stencil_trace(n, m, order, Layout::ColumnMajor)?;
                    rows.cache(variant, &t, &cache)?;
                    traces.push((format!("stencil-{variant}"), t));
                }
            }
            "sgd" => {
                let t = gen_sgd_trace(sgd_points, sgd_epochs, sgd_batch, sgd_shuffle, seed)?;
                let mut rows = TraceRows {
                    table: &mut table,
                    scenario: "sgd",
                };
                rows.reuse("mbgd", &t, ObjectId::TRAIN_SET)?;
                rows.reuse("mbgd", &t, ObjectId::MODEL)?;
                rows.cache("mbgd", &t, &cache)?;
                traces.push(("sgd".into(), t));
            }
            "knn" => {
                let t = gen_knn_trace(knn_train, knn_query, knn_batch)?;
                let mut rows = TraceRows {
                    table: &mut table,
                    scenario: "knn",
                };
                rows.reuse("batched", &t, ObjectId::TRAIN_SET)?;
                rows.reuse("batched", &t, ObjectId::QUERY_SET)?;
                rows.cache("batched", &t, &cache)?;
                traces.push(("knn".into(), t));
            }
            "cv" => {
                for (variant, streamed) in [("naive", false), ("streamed", true)] {
                    let t = gen_cv_trace(cv_points, cv_k, streamed, seed)?;
                    let (train, test) = phase_read_counts(&t);
                    let mut rows = TraceRows {
                        table: &mut table,
                        scenario: "cv",
                    };
                    rows.push(variant, "training_loads", json!(train.iter().sum::<u64>()));
                    rows.push(variant, "min_training_reads_per_point", json!(train.iter().min()));
                    rows.push(variant, "max_training_reads_per_point", json!(train.iter().max()));
                    rows.push(variant, "min_test_reads_per_point", json!(test.iter().min()));
                    rows.push(variant, "max_test_reads_per_point", json!(test.iter().max()));
                    traces.push((format!("cv-{variant}"), t));
                }
            }
            "bootstrap" => {
                let t = gen_bootstrap_trace(boot_points, boot_samples, seed)?;
                let stats = stack_distances(&t)?;
                let mut rows = TraceRows {
                    table: &mut table,
                    scenario: "bootstrap",
                };
                let reused: u64 = stats.histogram.values().sum();
                let weighted: u64 = stats.histogram.iter().map(|(d, c)| d * c).sum();
                rows.push("resample", "accesses", json!(t.len()));
                rows.push("resample", "cold_misses", json!(stats.cold_misses));
                rows.push(
                    "resample",
                    "mean_stack_distance",
                    if reused > 0 {
                        f(weighted as f64 / reused as f64)
                    } else {
                        Value::Null
                    },
                );
                for (label, slice) in t.phase_slices() {
                    let distinct: std::collections::BTreeSet<u64> = slice.iter().map(|e| e.element).collect();
                    rows.push(
                        label,
                        "distinct_fraction",
                        f(distinct.len() as f64 / slice.len() as f64),
                    );
                }
                rows.cache("resample", &t, &cache)?;
                traces.push(("bootstrap".into(), t));
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown trace scenario {other:?} (expected stencil, sgd, knn, cv or bootstrap)"
                )))
            }
        }
    }
    let elapsed = start.elapsed().as_nanos() as u64;
    let mut written = vec![write_payload(&cfg, &Payload::from(table))?];
    if write_traces {
        for (name, t) in &traces {
            let path = cfg.out_path(&format!("trace-{name}.bin"));
            std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(cfg.out.display().to_string(), e))?;
            write_trace(t, &path)?;
            written.push(path);
        }
    }
    written.push(write_meta(&cfg, json!({ "elapsed_s": elapsed as f64 * 1e-9 }))?);
    Ok(written)
}

/// Per training point, the number of reads in training phases and in
/// test phases.
fn phase_read_counts(t: &AccessTrace) -> (Vec<u64>, Vec<u64>) {
    let n = t.events().iter().map(|e| e.element + 1).max().unwrap_or(0) as usize;
    let (mut train, mut test) = (vec![0u64; n], vec![0u64; n]);
    for (label, slice) in t.phase_slices() {
        let target = if label.starts_with("test") {
            &mut test
        } else {
            &mut train
        };
        for e in slice {
            target[e.element as usize] += 1;
        }
    }
    (train, test)
}

fn grad_check(mut cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut p = Params::new(&cfg.params);
    let points = p.get("points", 100usize)?;
    let eps = p.get("eps", 1e-5f64)?;
    let threshold = p.get("threshold", 1e-5f64)?;
    let n_features = p.get("n_features", 5usize)?;
    let layers: Vec<usize> = p.get_list("layers", "4,6,5,3")?;
    let bias = p.get("bias", false)?;
    finish(&mut cfg, p)?;
    if points == 0 || n_features == 0 {
        return Err(CliError::Config("points and n_features must be positive".into()));
    }

    let start = Instant::now();
    let mut table = Table::new(&["seed", "model", "points", "max_relative_error", "threshold", "passed"]);
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        let mut r = rng::from_seed(seed);
        for loss in [LossKind::Logistic, LossKind::Hinge] {
            let mut worst = 0.0f64;
            let mut done = 0;
            while done < points {
                let mut model = LinearModel::zeros(loss, n_features);
                model.weights.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
                if bias {
                    model = model.with_bias(r.random_range(-1.0..1.0));
                }
                let x: Vec<f64> = (0..n_features).map(|_| r.random_range(-1.0..1.0)).collect();
                let y = loss.target_for_class(usize::from(r.random_bool(0.5)))?;
                // the hinge is not differentiable at the margin
                if loss == LossKind::Hinge && (1.0 - y * model.inner(&x)).abs() < 1e-3 {
                    continue;
                }
                worst = worst.max(model.grad_check(&x, y, eps)?);
                done += 1;
            }
            let name = match loss {
                LossKind::Logistic => "logistic",
                LossKind::Hinge => "hinge",
            };
            table.push(vec![
                json!(seed),
                json!(name),
                json!(points),
                f(worst),
                f(threshold),
                json!(worst <= threshold),
            ]);
            if worst > threshold {
                failures.push(format!("{name} (seed {seed}): {worst:e}"));
            }
        }

        let mlp = Mlp::new(&layers, OutputHead::SoftmaxCrossEntropy, bias, rng::derive(seed, 7))?;
        let (n_in, n_out) = (mlp.n_inputs(), mlp.n_outputs());
        let mut worst = 0.0f64;
        for _ in 0..points {
            let x: Vec<f64> = (0..n_in).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut y = Matrix::zeros(n_out, 1);
            y.set(r.random_range(0..n_out), 0, 1.0);
            worst = worst.max(mlp.grad_check(&Matrix::from_columns(&[&x])?, &y, eps)?);
        }
        table.push(vec![
            json!(seed),
            json!("mlp"),
            json!(points),
            f(worst),
            f(threshold),
            json!(worst <= threshold),
        ]);
        if worst > threshold {
            failures.push(format!("mlp (seed {seed}): {worst:e}"));
        }
    }
    let elapsed = start.elapsed().as_nanos() as u64;
    let payload = write_payload(&cfg, &Payload::from(table))?;
    let meta = write_meta(&cfg, json!({ "elapsed_s": elapsed as f64 * 1e-9 }))?;
    if !failures.is_empty() {
        return Err(CliError::Check(format!("gradient mismatch: {}", failures.join("; "))));
    }
    Ok(vec![payload, meta])
}

fn data_gen(mut cfg: RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut p = Params::new(&cfg.params);
    let n = p.get("n_points", 1000usize)?;
    let spec = BlobSpec::read(
        &mut p,
        &BlobDefaults {
            n_points: n,
            n_classes: 2,
            n_features: 2,
            sigma: 1.0,
            separation: 4.0,
        },
    )?;
    finish(&mut cfg, p)?;
    if cfg.dataset_path().is_some() {
        return Err(CliError::Config(
            "data-gen only generates blobs; leave dataset unset".into(),
        ));
    }
    let start = Instant::now();
    let data = spec.generate(n, cfg.seed())?;
    let body = match cfg.format {
        Format::Csv => {
            let mut buf = csv_preamble(&cfg)?.into_bytes();
            data.write_csv(&mut buf)?;
            buf
        }
        Format::Json => {
            let doc = json!({
                "schema": crate::output::schema_name(&cfg),
                "version": ml_locality::VERSION,
                "config": cfg,
                "data": data,
            });
            (serde_json::to_string_pretty(&doc)? + "\n").into_bytes()
        }
    };
    let elapsed = start.elapsed().as_nanos() as u64;
    let payload = write_file(cfg.out_path(&format!("data-gen.{}", cfg.format.extension())), &body)?;
    let meta = write_meta(&cfg, json!({ "elapsed_s": elapsed as f64 * 1e-9 }))?;
    Ok(vec![payload, meta])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_layout() {
        assert_eq!(blob_centers(2, 3, 0.5), vec![vec![-0.25; 3], vec![0.25; 3]]);
        let c = blob_centers(3, 4, 2.0);
        assert_eq!(c[0], vec![2.0, 0.0, 0.0, 2.0]);
        assert_eq!(c[2], vec![0.0, 0.0, 2.0, 0.0]);
    }
}
