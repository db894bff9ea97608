use std::f64::consts::PI;

use ml_locality::bayes::{fit_nb, predict_nb, DEFAULT_VAR_FLOOR};
use ml_locality::data::generate_blobs;
use ml_locality::instance::{joint_classify, knn_classify, prw_classify, KernelSpec};
use ml_locality::Dataset;

fn accuracy(labels: &[usize], data: &Dataset) -> f64 {
    let hits = labels.iter().enumerate().filter(|&(i, &l)| l == data.class(i)).count();
    hits as f64 / labels.len() as f64
}

fn three_centers() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0]]
}

#[test]
fn prw_accuracy_on_held_out_blobs() {
    let sigma = 0.7;
    let rt = generate_blobs(100, 3, 2, &three_centers(), sigma, 1).unwrap();
    let p = generate_blobs(50, 3, 2, &three_centers(), sigma, 2).unwrap();
    let (labels, _) = prw_classify(&rt, &p, &KernelSpec::gaussian(sigma).unwrap()).unwrap();
    assert!(accuracy(&labels, &p) >= 0.95);
}

#[test]
fn knn_with_full_neighbourhood_is_global_majority() {
    let values = vec![0.0, 0.1, 0.2, 9.0, 9.1];
    let rt = Dataset::from_classes(values, 1, vec![1, 1, 1, 0, 0]).unwrap();
    let p = Dataset::from_classes(vec![9.05, -3.0], 1, vec![0, 0]).unwrap();
    assert_eq!(knn_classify(&rt, &p, 5, 2).unwrap().0, vec![1, 1]);
}

#[test]
fn joint_run_halves_distance_work() {
    let rt = generate_blobs(34, 3, 2, &three_centers(), 1.0, 3).unwrap();
    let p = generate_blobs(7, 3, 2, &three_centers(), 1.0, 4).unwrap();
    let rt = rt.subset(&(0..100).collect::<Vec<_>>()).unwrap();
    let p = p.subset(&(0..20).collect::<Vec<_>>()).unwrap();
    let kernel = KernelSpec::gaussian(1.0).unwrap();
    let (kl, ka) = knn_classify(&rt, &p, 3, 4).unwrap();
    let (pl, pa) = prw_classify(&rt, &p, &kernel).unwrap();
    let (jk, jp, j) = joint_classify(&rt, &p, 3, &kernel, 4).unwrap();
    assert_eq!((kl, pl), (jk, jp));
    assert_eq!(ka.merged(pa).distance_computations, 4000);
    assert_eq!(j.distance_computations, 2000);
}

/// `P(c) · Π_i N(x_i; μ, σ²)` evaluated in linear space.
fn direct_numerator(data: &Dataset, c: usize, x: &[f64]) -> f64 {
    let rows: Vec<usize> = (0..data.n_points()).filter(|&t| data.class(t) == c).collect();
    let prior = rows.len() as f64 / data.n_points() as f64;
    let mut p = prior;
    for (i, &xi) in x.iter().enumerate() {
        let mu = rows.iter().map(|&t| data.point(t)[i]).sum::<f64>() / rows.len() as f64;
        let var = rows.iter().map(|&t| (data.point(t)[i] - mu).powi(2)).sum::<f64>() / rows.len() as f64;
        let var = var.max(DEFAULT_VAR_FLOOR);
        p *= (-(xi - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
    }
    p
}

#[test]
fn naive_bayes_matches_direct_posterior_numerators() {
    let two = Dataset::from_classes(vec![0.0, 0.4, 1.0, 3.0, 3.2, 2.5], 1, vec![0, 0, 0, 1, 1, 1]).unwrap();
    let three = generate_blobs(10, 3, 2, &three_centers(), 1.5, 5).unwrap();
    for data in [&two, &three] {
        let (model, counter) = fit_nb(data, DEFAULT_VAR_FLOOR).unwrap();
        assert_eq!(counter.point_reads, data.n_points() as u64);
        for t in 0..data.n_points() {
            let argmax = |v: &[f64]| (1..v.len()).fold(0, |b, c| if v[c] > v[b] { c } else { b });
            let x = data.point(t);
            let direct: Vec<f64> = (0..data.n_classes()).map(|c| direct_numerator(data, c, x)).collect();
            let (label, scores) = predict_nb(&model, x).unwrap();
            assert_eq!(label, argmax(&direct));
            for (s, d) in scores.iter().zip(&direct) {
                assert!((s.exp() - d).abs() <= 1e-9 * d.max(1e-300));
            }
            let shifted: Vec<f64> = scores.iter().map(|s| s + 3.0).collect();
            assert_eq!(argmax(&shifted), argmax(&scores));
        }
    }
}
