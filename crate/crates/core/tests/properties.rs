mod common;

use common::{id, random_envs, rng};
use cric::criterion::{cric, CricOptions};
use cric::data::MultiEnvDataset;
use cric::learners::{Predictor, PredictorKind};
use cric::ratio::{exact_gaussian_ratio, ClassifierConfig, GaussianParams, PairClassifier, RatioMode, RatioModel};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_linear(r: &mut impl Rng, d: usize, kind: PredictorKind) -> Predictor {
    let w = Array1::from_iter((0..d).map(|_| r.random_range(-2.0..2.0)));
    Predictor::linear(kind, w, r.random_range(-1.0..1.0)).unwrap()
}

/// Random SPD matrix `A Aᵀ + I/2`.
fn spd(r: &mut impl Rng, d: usize) -> Vec<Vec<f64>> {
    let a = Array2::from_shape_fn((d, d), |_| r.random_range(-1.0..1.0));
    let m = a.dot(&a.t()) + Array2::<f64>::eye(d) * 0.5;
    m.rows().into_iter().map(|row| row.to_vec()).collect()
}

fn shuffled(data: &MultiEnvDataset, seed: u64) -> MultiEnvDataset {
    let mut r = rng(seed);
    let envs = data
        .iter()
        .map(|(e, env)| {
            let mut idx: Vec<usize> = (0..env.len()).collect();
            idx.shuffle(&mut r);
            (e.clone(), env.select(&idx).unwrap())
        })
        .collect();
    MultiEnvDataset::new(envs, data.feature_names().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_ratio_reciprocity(seed in any::<u64>(), d in 1usize..6) {
        let mut r = rng(seed);
        let mean = |r: &mut rand_chacha::ChaCha8Rng| (0..d).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<_>>();
        let p1 = GaussianParams::new(mean(&mut r), spd(&mut r, d));
        let p2 = GaussianParams::new(mean(&mut r), spd(&mut r, d));
        for _ in 0..10 {
            let x = Array1::from_iter((0..d).map(|_| r.random_range(-3.0..3.0)));
            let a = exact_gaussian_ratio(&p1, &p2, x.view()).unwrap();
            let b = exact_gaussian_ratio(&p2, &p1, x.view()).unwrap();
            prop_assert!(close(a * b, 1.0, 1e-12), "{a} * {b}");
        }
    }

    #[test]
    fn clipped_ratios_are_positive_and_finite(
        weights in prop::collection::vec(-1e3f64..1e3, 4),
        x in prop::collection::vec(-1e6f64..1e6, 3),
        n1 in 2usize..10_000,
        n2 in 2usize..10_000,
    ) {
        let clf = PairClassifier::new(id("a"), id("b"), weights, n1, n2, 1e-3).unwrap();
        let x = Array1::from(x);
        for reversed in [false, true] {
            let rho = clf.ratio(x.view(), reversed);
            prop_assert!(rho.is_finite() && rho > 0.0, "{rho}");
        }
    }

    #[test]
    fn criterion_is_nonnegative_and_scale_invariant(seed in any::<u64>(), alpha in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
        let mut r = rng(seed);
        let d = r.random_range(1..5);
        let data = random_envs(&mut r, 3, d, 40);
        let ratio = RatioModel::fit_gaussian(&data).unwrap();
        let p = random_linear(&mut r, d, PredictorKind::IrmStyle);
        let b = random_linear(&mut r, d, PredictorKind::ErmBaseline);
        let opts = CricOptions::default();
        let q = cric(&p, &b, &ratio, &data, opts).unwrap();
        prop_assert!(q.q_hat >= 0.0);
        let scaled = cric(&p.scaled(alpha).unwrap(), &b.scaled(alpha).unwrap(), &ratio, &data, opts).unwrap();
        prop_assert!(close(q.q_hat, scaled.q_hat, 1e-12), "{} vs {}", q.q_hat, scaled.q_hat);
    }

    #[test]
    fn normalised_weights_give_affine_invariance(
        seed in any::<u64>(),
        alpha in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
        shift in -50.0f64..50.0,
    ) {
        let mut r = rng(seed);
        let d = r.random_range(1..5);
        let data = random_envs(&mut r, 3, d, 40);
        let ratio = RatioModel::fit_gaussian(&data).unwrap();
        let p = random_linear(&mut r, d, PredictorKind::IrmStyle);
        let b = random_linear(&mut r, d, PredictorKind::ErmBaseline);
        let opts = CricOptions { weight_normalized: true };
        let q = cric(&p, &b, &ratio, &data, opts).unwrap();
        let moved = cric(&p.affine(alpha, shift).unwrap(), &b.affine(alpha, shift).unwrap(), &ratio, &data, opts).unwrap();
        prop_assert!(close(q.q_hat, moved.q_hat, 1e-10), "{} vs {}", q.q_hat, moved.q_hat);
    }

    #[test]
    fn identical_predictor_and_baseline_give_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(1..5);
        let data = random_envs(&mut r, 3, d, 30);
        let ratio = RatioModel::fit_gaussian(&data).unwrap();
        let b = random_linear(&mut r, d, PredictorKind::ErmBaseline);
        let q = cric(&b, &b, &ratio, &data, CricOptions::default()).unwrap();
        prop_assert_eq!(q.q_hat, 1.0);
    }

    #[test]
    fn sample_order_does_not_matter(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(1..4);
        let data = random_envs(&mut r, 3, d, 30);
        let perm = shuffled(&data, perm_seed);
        let p = random_linear(&mut r, d, PredictorKind::IrmStyle);
        let b = random_linear(&mut r, d, PredictorKind::ErmBaseline);
        for mode in [RatioMode::ExactGaussian, RatioMode::Classifier] {
            let cfg = ClassifierConfig::default();
            let ra = RatioModel::fit(&data, mode, &cfg).unwrap();
            let rb = RatioModel::fit(&perm, mode, &cfg).unwrap();
            let qa = cric(&p, &b, &ra, &data, CricOptions::default()).unwrap();
            let qb = cric(&p, &b, &rb, &perm, CricOptions::default()).unwrap();
            prop_assert!(close(qa.q_hat, qb.q_hat, 1e-8), "{mode:?}: {} vs {}", qa.q_hat, qb.q_hat);
            for (sa, sb) in qa.pair_stats_phi.iter().zip(&qb.pair_stats_phi) {
                prop_assert!((sa.q_cross - sb.q_cross).abs() <= 1e-8 * sa.q_cross.abs().max(1.0));
                prop_assert!((sa.q_self - sb.q_self).abs() <= 1e-12 * sa.q_self.abs().max(1.0));
            }
        }
    }
}
