mod common;

use common::{gaussian_sample, id, rng};
use cric::criterion::{cric, CricOptions};
use cric::data::{EnvDataset, MultiEnvDataset};
use cric::learners::{Predictor, PredictorKind};
use cric::ratio::{GaussianParams, NamedGaussian, RatioModel};
use ndarray::{Array1, Array2};

fn two_envs(a: Array2<f64>, b: Array2<f64>) -> MultiEnvDataset {
    let (na, nb) = (a.nrows(), b.nrows());
    MultiEnvDataset::with_default_names(vec![
        (id("a"), EnvDataset::new(a, Array1::zeros(na)).unwrap()),
        (id("b"), EnvDataset::new(b, Array1::zeros(nb)).unwrap()),
    ])
    .unwrap()
}

/// With the true sampling laws the reweighted mean equals the plain mean in
/// expectation, so both sums are sampling noise and shrink like 1/n.
#[test]
fn exact_laws_make_both_sums_vanish() {
    let means = [[0.0, 0.0], [1.0, 0.5]];
    let ratio = RatioModel::exact_gaussian(
        ["a", "b"]
            .iter()
            .zip(&means)
            .map(|(e, m)| NamedGaussian {
                env: id(e),
                params: GaussianParams::isotropic(m.to_vec(), 1.0),
            })
            .collect(),
    )
    .unwrap();
    let p = Predictor::linear(PredictorKind::IrmStyle, Array1::from(vec![0.7, -0.4]), 0.1).unwrap();
    let b = Predictor::linear(PredictorKind::ErmBaseline, Array1::from(vec![1.0, 0.5]), 0.0).unwrap();
    let avg = |n: usize| {
        let mut num = 0.0;
        let mut den = 0.0;
        for seed in 0..20 {
            let mut r = rng(seed);
            let data = two_envs(
                gaussian_sample(&mut r, n, &means[0], &[1.0, 1.0]),
                gaussian_sample(&mut r, n, &means[1], &[1.0, 1.0]),
            );
            let rep = cric(&p, &b, &ratio, &data, CricOptions::default()).unwrap();
            num += rep.numerator;
            den += rep.denominator;
        }
        (num / 20.0, den / 20.0)
    };
    let (n1, d1) = avg(1_000);
    let (n2, d2) = avg(100_000);
    assert!(n2 < n1 / 20.0 && d2 < d1 / 20.0, "{n1} {n2} {d1} {d2}");
}
