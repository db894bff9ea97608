use ml_locality::data::{generate_blobs, ShuffleMode};
use ml_locality::linear::{LinearModel, LinearObjective, LossKind};
use ml_locality::nn::{batch_matrix, target_matrix, Mlp, MlpObjective, OutputHead};
use ml_locality::optim::{train, OptimizerConfig, UpdateRule};
use ml_locality::rng;
use rand::Rng;

fn logistic_loss(w: &[f64], x: &[f64], y: f64) -> f64 {
    let p: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    let s = 1.0 / (1.0 + (-p).exp());
    -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
}

fn hinge_loss(w: &[f64], x: &[f64], y: f64) -> f64 {
    let p: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    (1.0 - y * p).max(0.0)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, w: &[f64], eps: f64) -> Vec<f64> {
    let mut w = w.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = w[i];
            w[i] = orig + eps;
            let up = f(&w);
            w[i] = orig - eps;
            let down = f(&w);
            w[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn norm_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na.max(nb) == 0.0 {
        diff
    } else {
        diff / na.max(nb)
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut r = rng::from_seed(1);
    for _ in 0..200 {
        let w: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = if r.random_bool(0.5) { 1.0 } else { 0.0 };
        let model = LinearModel {
            loss: LossKind::Logistic,
            weights: w.clone(),
            bias: None,
        };
        let analytic = model.point_gradient(&x, y).unwrap();
        let numeric = central_difference(|w| logistic_loss(w, &x, y), &w, 1e-5);
        assert!(norm_relative_error(&analytic, &numeric) <= 1e-6);
    }
}

#[test]
fn hinge_gradient_matches_finite_differences_off_the_kink() {
    let mut r = rng::from_seed(2);
    let mut checked = 0;
    while checked < 200 {
        let w: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let p: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        if (1.0 - y * p).abs() < 1e-3 {
            continue;
        }
        let model = LinearModel {
            loss: LossKind::Hinge,
            weights: w.clone(),
            bias: None,
        };
        let analytic = model.point_gradient(&x, y).unwrap();
        let numeric = central_difference(|w| hinge_loss(w, &x, y), &w, 1e-6);
        assert!(norm_relative_error(&analytic, &numeric) <= 1e-6);
        checked += 1;
    }
}

#[test]
fn hinge_training_separates_blobs() {
    let centers = [vec![-2.0, -2.0], vec![2.0, 2.0]];
    let data = generate_blobs(100, 2, 2, &centers, 0.5, 3).unwrap();
    let objective = LinearObjective {
        loss: LossKind::Hinge,
        bias: true,
    };
    let config = OptimizerConfig {
        batch_size: 10,
        epochs: 50,
        step_size: 0.1,
        seed: 4,
        ..OptimizerConfig::default()
    };
    let (w, _) = train(vec![0.0; 3], &objective, &data, &config).unwrap();
    let model = LinearModel {
        loss: LossKind::Hinge,
        weights: w[..2].to_vec(),
        bias: Some(w[2]),
    };
    assert_eq!(model.accuracy(&data).unwrap(), 1.0);

    let test = generate_blobs(200, 2, 2, &centers, 0.5, 5).unwrap();
    assert!(model.accuracy(&test).unwrap() >= 0.95);
}

#[test]
fn logistic_gd_loss_never_increases() {
    let data = generate_blobs(50, 2, 3, &[vec![0.0; 3], vec![1.0; 3]], 1.0, 6).unwrap();
    let objective = LinearObjective {
        loss: LossKind::Logistic,
        bias: false,
    };
    let config = OptimizerConfig {
        batch_size: data.n_points(),
        epochs: 60,
        step_size: 0.05,
        shuffle: ShuffleMode::FixedOrder,
        ..OptimizerConfig::default()
    };
    let (_, report) = train(vec![0.0; 3], &objective, &data, &config).unwrap();
    let losses = report.losses();
    assert!(losses.windows(2).all(|p| p[1] <= p[0]), "{losses:?}");
}

#[test]
fn mlp_trains_below_target_loss() {
    let centers = [vec![-1.5, -1.5], vec![1.5, 1.5]];
    let data = generate_blobs(100, 2, 2, &centers, 0.6, 7).unwrap();
    let mlp = Mlp::new(&[2, 8, 2], OutputHead::SoftmaxCrossEntropy, true, 8).unwrap();
    let objective = MlpObjective::new(mlp.clone());
    let config = OptimizerConfig {
        batch_size: 10,
        epochs: 100,
        step_size: 0.5,
        rule: UpdateRule::Vanilla,
        seed: 9,
        ..OptimizerConfig::default()
    };
    let (w, report) = train(mlp.params().to_vec(), &objective, &data, &config).unwrap();
    let best = report.losses().into_iter().fold(f64::INFINITY, f64::min);
    assert!(best < 0.1, "best epoch loss {best}");

    let mut trained = mlp;
    trained.set_params(&w).unwrap();
    let all: Vec<usize> = (0..data.n_points()).collect();
    let batch_loss = trained
        .loss(
            &batch_matrix(&data, &all).unwrap(),
            &target_matrix(&data, &all).unwrap(),
        )
        .unwrap();
    assert!((batch_loss - report.final_loss().unwrap()).abs() <= 1e-12);
}
