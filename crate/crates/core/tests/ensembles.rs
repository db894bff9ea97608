use std::cell::RefCell;
use std::rc::Rc;

use ml_locality::data::{bootstrap_indices, generate_blobs, partition_folds};
use ml_locality::ensemble::{
    accuracy, bagging, boost3, bootstrap_variance, cross_validate, cross_validate_streamed, KnnLearner, Learner,
    LinearSgdLearner, SgdSettings, VisitLog,
};
use ml_locality::linear::LossKind;
use ml_locality::{rng, Dataset};

fn noisy_blobs(n_per_class: usize, seed: u64) -> Dataset {
    generate_blobs(n_per_class, 2, 2, &[vec![0.0, 0.0], vec![1.2, 1.2]], 1.0, seed).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn leave_one_out_with_twins_is_perfect() {
    let base = generate_blobs(6, 3, 2, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], 0.8, 1).unwrap();
    let twins: Vec<usize> = (0..base.n_points()).flat_map(|i| [i, i]).collect();
    let data = base.subset(&twins).unwrap();
    let report = cross_validate(&|_| KnnLearner::new(1), &data, data.n_points(), 2).unwrap();
    assert_eq!(report.mean_accuracy, 1.0);
}

fn recording_factory(logs: &RefCell<Vec<VisitLog>>, settings: SgdSettings) -> impl Fn(u64) -> LinearSgdLearner + '_ {
    move |seed| {
        let log: VisitLog = Rc::new(RefCell::new(Vec::new()));
        logs.borrow_mut().push(log.clone());
        LinearSgdLearner::new(settings, seed).with_visit_log(log)
    }
}

fn sorted_visits(logs: &RefCell<Vec<VisitLog>>) -> Vec<Vec<(usize, usize)>> {
    logs.borrow()
        .iter()
        .map(|l| {
            let mut v = l.borrow().clone();
            v.sort_unstable();
            v
        })
        .collect()
}

#[test]
fn streamed_cv_visits_same_multiset_as_naive() {
    let data = noisy_blobs(37, 2);
    for (k, epochs, seed) in [(5, 3, 1), (2, 2, 9), (7, 1, 4)] {
        let settings = SgdSettings {
            epochs,
            batch_size: 6,
            ..SgdSettings::default()
        };
        let naive_logs = RefCell::new(Vec::new());
        let streamed_logs = RefCell::new(Vec::new());
        let naive = cross_validate(&recording_factory(&naive_logs, settings), &data, k, seed).unwrap();
        let streamed =
            cross_validate_streamed(&recording_factory(&streamed_logs, settings), &data, k, epochs, 6, seed).unwrap();
        assert_eq!(sorted_visits(&naive_logs), sorted_visits(&streamed_logs));
        let n = data.n_points() as u64;
        assert_eq!(naive.point_loads, epochs as u64 * (k as u64 - 1) * n);
        assert_eq!(streamed.point_loads, epochs as u64 * n);

        let folds = partition_folds(data.n_points(), k, seed).unwrap();
        for (f, visits) in sorted_visits(&streamed_logs).iter().enumerate() {
            let complement = folds.complement(f);
            let expected: Vec<(usize, usize)> = complement
                .iter()
                .flat_map(|&t| (0..epochs).map(move |e| (t, e)))
                .collect();
            let mut expected = expected;
            expected.sort_unstable();
            assert_eq!(visits, &expected);
        }
    }
}

#[test]
fn bootstrap_variance_matches_scripted_rerun() {
    let data = noisy_blobs(20, 3);
    let test = noisy_blobs(20, 4);
    let report = bootstrap_variance(&|_| KnnLearner::new(1), &data, 20, &test, 5).unwrap();
    assert!(report.variance >= 0.0);

    let all: Vec<usize> = (0..test.n_points()).collect();
    let accs: Vec<f64> = (0..20)
        .map(|b| {
            let s = rng::derive(5, b);
            let mut l = KnnLearner::new(1);
            l.fit(&data, &bootstrap_indices(data.n_points(), s).unwrap()).unwrap();
            accuracy(&l, &test, &all).unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / 20.0;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 20.0;
    assert_eq!(report.accuracies, accs);
    assert!((report.variance - var).abs() <= 1e-12);
}

fn hinge_settings() -> SgdSettings {
    SgdSettings {
        loss: LossKind::Hinge,
        epochs: 3,
        batch_size: 8,
        step_size: 0.05,
        ..SgdSettings::default()
    }
}

#[test]
fn bagged_hinge_learners_keep_up_with_single_models() {
    let (mut bagged, mut single) = (Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let train = noisy_blobs(100, 100 + seed);
        let test = noisy_blobs(100, 200 + seed);
        let all: Vec<usize> = (0..test.n_points()).collect();
        let factory = |s| LinearSgdLearner::new(hinge_settings(), s);
        let ens = bagging(&factory, &train, 15, seed).unwrap();
        bagged.push(accuracy(&ens, &test, &all).unwrap());
        let mut one = factory(rng::derive(seed, 99));
        one.fit(&train, &bootstrap_indices(train.n_points(), seed).unwrap())
            .unwrap();
        single.push(accuracy(&one, &test, &all).unwrap());
    }
    let (b, s) = (median(bagged), median(single));
    assert!(b >= s - 0.02, "bagged {b} vs single {s}");
}

#[test]
fn boosting_keeps_up_with_first_model_and_memoizes() {
    let (mut ens, mut m1) = (Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let train = noisy_blobs(100, 300 + seed);
        let test = noisy_blobs(100, 400 + seed);
        let weak = SgdSettings {
            epochs: 1,
            ..hinge_settings()
        };
        let r = boost3(&|s| LinearSgdLearner::new(weak, s), &train, &test, 60, seed).unwrap();
        assert!(r.cache.evaluations.values().all(|&e| e <= train.n_points() as u64));
        assert_eq!(r.cache.hits + r.cache.misses, 3 * train.n_points() as u64);
        ens.push(r.ensemble_test_accuracy);
        m1.push(r.m1_test_accuracy);
    }
    let (e, m) = (median(ens), median(m1));
    assert!(e >= m - 0.02, "boosted {e} vs first model {m}");
}
