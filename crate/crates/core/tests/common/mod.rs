#![allow(dead_code)]

use cric::data::{EnvDataset, EnvironmentId, MultiEnvDataset};
use cric::learners::{irmv1_penalty, risk, vrex_penalty, Predictor, PredictorKind};
use cric::ratio::{GaussianParams, NamedGaussian, RatioModel};
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn id(s: &str) -> EnvironmentId {
    EnvironmentId::new(s).unwrap()
}

/// `n` draws from `N(mean, diag(sd²))`.
pub fn gaussian_sample(rng: &mut impl Rng, n: usize, mean: &[f64], sd: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((n, mean.len()), |(_, j)| {
        let z: f64 = rng.sample(StandardNormal);
        mean[j] + sd[j] * z
    })
}

/// Outcome `y = xᵀβ + noise · z`.
pub fn linear_outcome(rng: &mut impl Rng, x: &Array2<f64>, beta: &[f64], noise: f64) -> Array1<f64> {
    let b = Array1::from(beta.to_vec());
    let mut y = x.dot(&b);
    for v in y.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += noise * z;
    }
    y
}

pub fn diag_params(mean: &[f64], sd: &[f64]) -> GaussianParams {
    let d = mean.len();
    let cov = (0..d)
        .map(|i| (0..d).map(|j| if i == j { sd[i] * sd[i] } else { 0.0 }).collect())
        .collect();
    GaussianParams::new(mean.to_vec(), cov)
}

pub fn exact_model(params: Vec<(&str, GaussianParams)>) -> RatioModel {
    RatioModel::exact_gaussian(
        params
            .into_iter()
            .map(|(e, p)| NamedGaussian { env: id(e), params: p })
            .collect(),
    )
    .unwrap()
}

/// Random environments with per-environment mean shifts and scales.
pub fn random_envs(rng: &mut impl Rng, k: usize, d: usize, n: usize) -> MultiEnvDataset {
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let envs = (0..k)
        .map(|e| {
            let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sd: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
            let x = gaussian_sample(rng, n, &mean, &sd);
            let y = linear_outcome(rng, &x, &beta, 0.5 + e as f64);
            (id(&format!("e{e}")), EnvDataset::new(x, y).unwrap())
        })
        .collect();
    MultiEnvDataset::with_default_names(envs).unwrap()
}

pub fn predictor(theta: &Array1<f64>) -> Predictor {
    let d = theta.len() - 1;
    Predictor::linear(PredictorKind::IrmStyle, theta.slice(s![..d]).to_owned(), theta[d]).unwrap()
}

// Objectives evaluated straight from predictions, independent of the
// moment-based implementation.
pub fn pooled_direct(data: &MultiEnvDataset, theta: &Array1<f64>) -> f64 {
    let p = predictor(theta);
    let total = data.total_len() as f64;
    data.iter().map(|(_, e)| risk(&p, e) * e.len() as f64).sum::<f64>() / total
}

pub fn irmv1_direct(data: &MultiEnvDataset, theta: &Array1<f64>, lambda: f64) -> f64 {
    let p = predictor(theta);
    let k = data.num_envs() as f64;
    data.iter()
        .map(|(_, e)| risk(&p, e) + lambda * irmv1_penalty(&p, e))
        .sum::<f64>()
        / k
}

pub fn vrex_direct(data: &MultiEnvDataset, theta: &Array1<f64>, lambda: f64) -> f64 {
    let p = predictor(theta);
    let risks: Vec<f64> = data.iter().map(|(_, e)| risk(&p, e)).collect();
    risks.iter().sum::<f64>() / risks.len() as f64 + lambda * vrex_penalty(&risks).unwrap()
}

pub fn central_difference(f: impl Fn(&Array1<f64>) -> f64, theta: &Array1<f64>) -> Array1<f64> {
    Array1::from_iter((0..theta.len()).map(|j| {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[j] += h;
        minus[j] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }))
}

pub fn relative_error(analytic: &Array1<f64>, numeric: &Array1<f64>) -> f64 {
    let diff = analytic - numeric;
    diff.dot(&diff).sqrt() / analytic.dot(analytic).sqrt().max(1e-8)
}
