//! The empirical criterion `Q̂`.
//!
//! For an ordered pair `(e, e')` the cross statistic reweights predictions
//! on the `e'` sample toward `e`, and the self statistic is the plain mean
//! on `e`:
//!
//! ```text
//! q̂(e, e') = (1/n_{e'}) Σ_i f(x_i^{e'}) ρ(e, e')(x_i^{e'})
//! q̂(e, e)  = (1/n_e)    Σ_i f(x_i^e)
//! Q̂        = Σ_{e≠e'} (q̂_f(e,e') − q̂_f(e,e))² / Σ_{e≠e'} (q̂_base(e,e') − q̂_base(e,e))²
//! ```
//!
//! The baseline is the pooled ERM predictor on raw covariates. One set of
//! weights per ordered pair is shared by both sums.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{EnvironmentId, MultiEnvDataset};
use crate::error::{CricError, Result};
use crate::learners::{Predictor, PredictorKind};
use crate::ratio::RatioModel;

/// Relative guard on the denominator, scaled by the mean squared baseline
/// prediction.
pub const DENOMINATOR_THRESHOLD_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CricOptions {
    /// Rescale each pair's weights to mean exactly one over the `e'` sample.
    pub weight_normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistic {
    pub e: EnvironmentId,
    pub e_prime: EnvironmentId,
    pub q_cross: f64,
    pub q_self: f64,
    pub squared_gap: f64,
}

impl PairStatistic {
    fn new(e: &EnvironmentId, e_prime: &EnvironmentId, q_cross: f64, q_self: f64) -> Self {
        let gap = q_cross - q_self;
        Self {
            e: e.clone(),
            e_prime: e_prime.clone(),
            q_cross,
            q_self,
            squared_gap: gap * gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CricReport {
    pub pair_stats_phi: Vec<PairStatistic>,
    pub pair_stats_baseline: Vec<PairStatistic>,
    pub numerator: f64,
    pub denominator: f64,
    pub denominator_threshold: f64,
    pub q_hat: f64,
    /// `None` when `q_hat` is exactly zero.
    pub log10_q_hat: Option<f64>,
    pub weight_normalized: bool,
}

fn pair_weights(
    ratio: &RatioModel,
    e: &EnvironmentId,
    e_prime: &EnvironmentId,
    xs: &Array2<f64>,
    opts: CricOptions,
) -> Result<Array1<f64>> {
    if opts.weight_normalized {
        ratio.normalized_weights(e, e_prime, xs)
    } else {
        ratio.weights(e, e_prime, xs)
    }
}

fn weighted_mean(pred: &Array1<f64>, w: &Array1<f64>) -> f64 {
    pred.dot(w) / pred.len() as f64
}

fn check_inputs(p: &Predictor, data: &MultiEnvDataset) -> Result<()> {
    p.check_dim(data.feature_dim())
}

/// `q̂(e, e')`.
pub fn q_hat_cross(
    p: &Predictor,
    ratio: &RatioModel,
    e: &EnvironmentId,
    e_prime: &EnvironmentId,
    data: &MultiEnvDataset,
    opts: CricOptions,
) -> Result<f64> {
    check_inputs(p, data)?;
    data.get(e)?;
    let env = data.get(e_prime)?;
    let w = pair_weights(ratio, e, e_prime, env.covariates(), opts)?;
    Ok(weighted_mean(&p.predict_batch(env.covariates()), &w))
}

/// `q̂(e, e)`: mean prediction on environment `e`.
pub fn q_hat_self(p: &Predictor, e: &EnvironmentId, data: &MultiEnvDataset) -> Result<f64> {
    check_inputs(p, data)?;
    let env = data.get(e)?;
    Ok(p.predict_batch(env.covariates()).mean().expect("n >= 2"))
}

/// `Q̂` of `p` against the ERM `baseline` over all ordered pairs `e ≠ e'`.
pub fn cric(
    p: &Predictor,
    baseline: &Predictor,
    ratio: &RatioModel,
    data: &MultiEnvDataset,
    opts: CricOptions,
) -> Result<CricReport> {
    if data.num_envs() < 2 {
        return Err(CricError::Structural(format!(
            "CRIC needs at least 2 environments, got {}",
            data.num_envs()
        )));
    }
    if baseline.kind() != PredictorKind::ErmBaseline {
        return Err(CricError::Config("baseline predictor must be of kind erm_baseline".into()));
    }
    check_inputs(p, data)?;
    check_inputs(baseline, data)?;

    let ids: Vec<&EnvironmentId> = data.ids().collect();
    let preds: Vec<(Array1<f64>, Array1<f64>)> = data
        .iter()
        .map(|(_, env)| (p.predict_batch(env.covariates()), baseline.predict_batch(env.covariates())))
        .collect();
    let self_stats: Vec<(f64, f64)> = preds
        .iter()
        .map(|(f, b)| (f.mean().expect("n >= 2"), b.mean().expect("n >= 2")))
        .collect();

    let mut pair_stats_phi = Vec::new();
    let mut pair_stats_baseline = Vec::new();
    for (i, e) in ids.iter().enumerate() {
        for (j, (e_prime, env)) in data.iter().enumerate() {
            if i == j {
                continue;
            }
            let w = pair_weights(ratio, e, e_prime, env.covariates(), opts)?;
            let (f, b) = &preds[j];
            pair_stats_phi.push(PairStatistic::new(e, e_prime, weighted_mean(f, &w), self_stats[i].0));
            pair_stats_baseline.push(PairStatistic::new(e, e_prime, weighted_mean(b, &w), self_stats[i].1));
        }
    }

    let numerator: f64 = pair_stats_phi.iter().map(|s| s.squared_gap).sum();
    let denominator: f64 = pair_stats_baseline.iter().map(|s| s.squared_gap).sum();
    let n_total = data.total_len() as f64;
    let scale_sq = preds.iter().map(|(_, b)| b.dot(b)).sum::<f64>() / n_total;
    let threshold = DENOMINATOR_THRESHOLD_FACTOR * scale_sq;
    if !numerator.is_finite() || !denominator.is_finite() {
        return Err(CricError::Numeric("non-finite CRIC sums".into()));
    }
    if denominator <= threshold {
        return Err(CricError::DegenerateBaseline {
            denominator,
            threshold,
        });
    }
    let q_hat = numerator / denominator;
    Ok(CricReport {
        pair_stats_phi,
        pair_stats_baseline,
        numerator,
        denominator,
        denominator_threshold: threshold,
        q_hat,
        log10_q_hat: (q_hat > 0.0).then(|| q_hat.log10()),
        weight_normalized: opts.weight_normalized,
    })
}

/// `prediction_error + θ · Q̂`.
pub fn integrated_criterion(prediction_error: f64, q_hat: f64, theta: f64) -> f64 {
    prediction_error + theta * q_hat
}
