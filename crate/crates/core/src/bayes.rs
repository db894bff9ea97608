//! Gaussian naive Bayes, fitted in a single pass over the training set.
//!
//! Prediction compares `ln P(c) + Σ_i ln N(x_i; μ_ci, σ²_ci)` across
//! classes; the evidence term is a shared constant and is dropped.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub priors: Vec<f64>,
    /// Row-major `n_classes × n_features`.
    pub means: Vec<f64>,
    /// Row-major `n_classes × n_features`, each at least `var_floor`.
    pub variances: Vec<f64>,
    pub var_floor: f64,
}

impl NbModel {
    pub fn mean(&self, class: usize, feature: usize) -> f64 {
        self.means[class * self.n_features + feature]
    }

    pub fn variance(&self, class: usize, feature: usize) -> f64 {
        self.variances[class * self.n_features + feature]
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Number of training-point reads performed by a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessCounter {
    pub point_reads: u64,
}

/// Fits priors and per-class Gaussian parameters with Welford's update,
/// reading each training point once. Variances are population variances
/// floored at `var_floor`.
pub fn fit_nb(train: &Dataset, var_floor: f64) -> Result<(NbModel, AccessCounter)> {
    if !(var_floor > 0.0 && var_floor.is_finite()) {
        return Err(Error::invalid(format!(
            "variance floor must be positive, got {var_floor}"
        )));
    }
    let classes = train.require_classification()?;
    let (nc, nf) = (train.n_classes(), train.n_features());
    let mut counts = vec![0u64; nc];
    let mut means = vec![0.0; nc * nf];
    let mut m2 = vec![0.0; nc * nf];
    let mut counter = AccessCounter::default();

    for (t, &c) in classes.iter().enumerate() {
        let x = train.point(t);
        counter.point_reads += 1;
        counts[c] += 1;
        let n = counts[c] as f64;
        let row = c * nf;
        for (i, &xi) in x.iter().enumerate() {
            let delta = xi - means[row + i];
            means[row + i] += delta / n;
            m2[row + i] += delta * (xi - means[row + i]);
        }
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {empty} has no training points")));
    }
    let total = train.n_points() as f64;
    let priors = counts.iter().map(|&n| n as f64 / total).collect();
    let variances = m2
        .iter()
        .enumerate()
        .map(|(idx, &s)| (s / counts[idx / nf] as f64).max(var_floor))
        .collect();
    Ok((
        NbModel {
            n_classes: nc,
            n_features: nf,
            priors,
            means,
            variances,
            var_floor,
        },
        counter,
    ))
}

/// Label and per-class log scores. Ties go to the smaller class id.
pub fn predict_nb(model: &NbModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    check_dim(model.n_features, x.len())?;
    let scores: Vec<f64> = (0..model.n_classes)
        .map(|c| {
            let mut s = model.priors[c].ln();
            for (i, &xi) in x.iter().enumerate() {
                let var = model.variance(c, i);
                let d = xi - model.mean(c, i);
                s -= 0.5 * ((2.0 * PI * var).ln() + d * d / var);
            }
            s
        })
        .collect();
    let mut best = 0;
    for c in 1..scores.len() {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;
    use proptest::prelude::*;

    #[test]
    fn constant_classes() {
        let d = Dataset::from_classes(vec![0.0, 0.0, 10.0, 10.0], 1, vec![0, 0, 1, 1]).unwrap();
        let (m, counter) = fit_nb(&d, DEFAULT_VAR_FLOOR).unwrap();
        assert_eq!(m.means, vec![0.0, 10.0]);
        assert_eq!(m.variances, vec![DEFAULT_VAR_FLOOR; 2]);
        assert_eq!(m.priors, vec![0.5, 0.5]);
        assert_eq!(counter.point_reads, 4);
        assert_eq!(predict_nb(&m, &[0.0]).unwrap().0, 0);
        assert_eq!(predict_nb(&m, &[10.0]).unwrap().0, 1);
    }

    #[test]
    fn symmetric_tie_goes_to_class_zero() {
        let m = NbModel {
            n_classes: 2,
            n_features: 1,
            priors: vec![0.5, 0.5],
            means: vec![-2.0, 2.0],
            variances: vec![1.0, 1.0],
            var_floor: DEFAULT_VAR_FLOOR,
        };
        let (label, s) = predict_nb(&m, &[0.0]).unwrap();
        assert_eq!(s[0], s[1]);
        assert_eq!(label, 0);
        assert_eq!(predict_nb(&m, &[2.0]).unwrap().0, 1);
        assert!(predict_nb(&m, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn errors() {
        let d = Dataset::from_classes(vec![0.0, 1.0], 1, vec![0, 0]).unwrap();
        assert!(fit_nb(&d, 0.0).is_err());
        let r = Dataset::new(vec![0.0, 1.0], 1, crate::data::Labels::Targets(vec![0.0, 1.0])).unwrap();
        assert!(fit_nb(&r, DEFAULT_VAR_FLOOR).is_err());
        let gap = Dataset::new(
            vec![0.0, 1.0],
            1,
            crate::data::Labels::Classes {
                ids: vec![0, 2],
                n_classes: 3,
            },
        )
        .unwrap();
        assert!(fit_nb(&gap, DEFAULT_VAR_FLOOR).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = generate_blobs(5, 2, 2, &[vec![0.0, 0.0], vec![2.0, 2.0]], 1.0, 3).unwrap();
        let (m, _) = fit_nb(&d, DEFAULT_VAR_FLOOR).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nb.json");
        m.save_json(&path).unwrap();
        assert_eq!(NbModel::load_json(&path).unwrap(), m);
    }

    fn two_pass(d: &Dataset) -> (Vec<f64>, Vec<f64>) {
        let (nc, nf) = (d.n_classes(), d.n_features());
        let mut means = vec![0.0; nc * nf];
        let mut vars = vec![0.0; nc * nf];
        for c in 0..nc {
            let rows: Vec<usize> = (0..d.n_points()).filter(|&t| d.class(t) == c).collect();
            for i in 0..nf {
                let mu = rows.iter().map(|&t| d.point(t)[i]).sum::<f64>() / rows.len() as f64;
                let v = rows.iter().map(|&t| (d.point(t)[i] - mu).powi(2)).sum::<f64>() / rows.len() as f64;
                means[c * nf + i] = mu;
                vars[c * nf + i] = v;
            }
        }
        (means, vars)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matches_two_pass_and_is_order_independent(seed in 0u64..10_000, n in 2usize..30) {
            let centers = vec![vec![0.0, 5.0, -3.0], vec![1.0, 4.0, 2.0], vec![-2.0, 0.0, 0.0]];
            let d = generate_blobs(n, 3, 3, &centers, 1.3, seed).unwrap();
            let (m, counter) = fit_nb(&d, DEFAULT_VAR_FLOOR).unwrap();
            prop_assert_eq!(counter.point_reads, d.n_points() as u64);
            let (means, vars) = two_pass(&d);
            for (a, b) in m.means.iter().zip(&means) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            for (a, b) in m.variances.iter().zip(&vars) {
                prop_assert!((a - b.max(DEFAULT_VAR_FLOOR)).abs() <= 1e-12 * b.abs().max(1.0));
            }
            let sum: f64 = m.priors.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);

            let mut order: Vec<usize> = (0..d.n_points()).collect();
            order.reverse();
            order.rotate_left(seed as usize % d.n_points());
            let (p, _) = fit_nb(&d.subset(&order).unwrap(), DEFAULT_VAR_FLOOR).unwrap();
            for (a, b) in m.means.iter().chain(&m.variances).zip(p.means.iter().chain(&p.variances)) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
