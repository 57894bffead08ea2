mod common;

use common::{diag_params, exact_model, gaussian_sample, id, rng};
use cric::data::{EnvDataset, MultiEnvDataset};
use cric::ratio::{ratio_diagnostics, ClassifierConfig, RatioModel};
use ndarray::Array1;

fn two_envs(a: ndarray::Array2<f64>, b: ndarray::Array2<f64>) -> MultiEnvDataset {
    let ya = Array1::zeros(a.nrows());
    let yb = Array1::zeros(b.nrows());
    MultiEnvDataset::with_default_names(vec![
        (id("a"), EnvDataset::new(a, ya).unwrap()),
        (id("b"), EnvDataset::new(b, yb).unwrap()),
    ])
    .unwrap()
}

fn same_law_mean_weight(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let data = two_envs(
        gaussian_sample(&mut r, n, &[0.0, 0.0], &[1.0, 1.0]),
        gaussian_sample(&mut r, n, &[0.0, 0.0], &[1.0, 1.0]),
    );
    let model = RatioModel::fit_classifier(&data, &ClassifierConfig::default()).unwrap();
    let diag = ratio_diagnostics(&model, &data).unwrap();
    diag.pairs[0].mean_weight
}

#[test]
fn same_distribution_mean_weight_near_one() {
    let m = same_law_mean_weight(5000, 1);
    assert!((0.9..=1.1).contains(&m), "{m}");
}

#[test]
fn mean_weight_error_shrinks_with_sample_size() {
    let avg_error = |n: usize| {
        (0..20)
            .map(|s| (same_law_mean_weight(n, 100 + s) - 1.0).abs())
            .sum::<f64>()
            / 20.0
    };
    let errors: Vec<f64> = [500, 5000, 50_000].into_iter().map(avg_error).collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn shifted_pair_has_reduced_effective_sample_size() {
    let mut r = rng(2);
    let data = two_envs(
        gaussian_sample(&mut r, 2000, &[0.0, 0.0], &[1.0, 1.0]),
        gaussian_sample(&mut r, 2000, &[1.5, -1.0], &[1.0, 1.0]),
    );
    let model = RatioModel::fit_classifier(&data, &ClassifierConfig::default()).unwrap();
    for pair in ratio_diagnostics(&model, &data).unwrap().pairs {
        assert!(pair.effective_sample_size < pair.n as f64);
        assert!(pair.min_weight > 0.0 && pair.max_weight.is_finite());
    }
}

#[test]
fn exact_mode_on_identical_laws_gives_unit_weights() {
    let mut r = rng(3);
    let data = two_envs(
        gaussian_sample(&mut r, 50, &[0.0], &[1.0]),
        gaussian_sample(&mut r, 70, &[0.0], &[1.0]),
    );
    let p = diag_params(&[0.0], &[1.0]);
    let model = exact_model(vec![("a", p.clone()), ("b", p)]);
    for pair in ratio_diagnostics(&model, &data).unwrap().pairs {
        assert_eq!(pair.mean_weight, 1.0);
        assert_eq!(pair.effective_sample_size, pair.n as f64);
    }
}

#[test]
fn classifier_log_ratio_tracks_exact_gaussian_log_ratio() {
    let (m1, m2) = ([0.0; 3], [0.5; 3]);
    let sd = [1.0; 3];
    let mut r = rng(4);
    let data = two_envs(
        gaussian_sample(&mut r, 5000, &m1, &sd),
        gaussian_sample(&mut r, 5000, &m2, &sd),
    );
    let fitted = RatioModel::fit_classifier(&data, &ClassifierConfig::default()).unwrap();
    let truth = exact_model(vec![("a", diag_params(&m1, &sd)), ("b", diag_params(&m2, &sd))]);
    let held_out = gaussian_sample(&mut r, 2000, &[0.25; 3], &sd);
    let est = fitted.log_weights(&id("a"), &id("b"), &held_out).unwrap();
    let exact = truth.log_weights(&id("a"), &id("b"), &held_out).unwrap();
    let mae = (&est - &exact).mapv(f64::abs).mean().unwrap();
    assert!(mae < 0.15, "{mae}");
}
