//! Likelihood-ratio estimation between environments.
//!
//! The classifier route fits a ridge-penalised logistic model separating
//! the two samples and converts its posterior into a density ratio with
//! the sample-size prior correction:
//!
//! ```text
//! ρ̂(e1, e2)(x) = n2 · p̂(x) / (n1 · (1 − p̂(x))),   p̂ clipped to [ε, 1 − ε]
//! ```
//!
//! The Gaussian route evaluates `φ(x; μ1, Σ1) / φ(x; μ2, Σ2)` in log space.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EnvDataset, EnvironmentId, MultiEnvDataset};
use crate::error::{CricError, Result};

/// Fitting options for the pairwise logistic classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Ridge strength on the mean negative log-likelihood scale
    /// (equivalently `ridge · n` on the summed scale).
    pub ridge: f64,
    /// Stop once the gradient infinity norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub clip_epsilon: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-4,
            tolerance: 1e-6,
            max_iterations: 10_000,
            clip_epsilon: 1e-3,
        }
    }
}

impl ClassifierConfig {
    fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return Err(CricError::Config(format!(
                "clip epsilon must lie in (0, 0.5), got {}",
                self.clip_epsilon
            )));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(CricError::Config("ridge strength must be positive".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(CricError::Config("tolerance and max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Logistic model of `Pr(E = e1 | X = x)` on the union of two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub e1: EnvironmentId,
    pub e2: EnvironmentId,
    /// Intercept followed by one coefficient per raw covariate.
    pub weights: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub clip_epsilon: f64,
}

impl PairClassifier {
    pub fn new(
        e1: EnvironmentId,
        e2: EnvironmentId,
        weights: Vec<f64>,
        n1: usize,
        n2: usize,
        clip_epsilon: f64,
    ) -> Result<Self> {
        if weights.len() < 2 || weights.iter().any(|w| !w.is_finite()) {
            return Err(CricError::Numeric("classifier weights must be finite, length d+1".into()));
        }
        if n1 < 2 || n2 < 2 {
            return Err(CricError::Size("classifier sample counts must be >= 2".into()));
        }
        if !(clip_epsilon > 0.0 && clip_epsilon < 0.5) {
            return Err(CricError::Config("clip epsilon must lie in (0, 0.5)".into()));
        }
        Ok(Self {
            e1,
            e2,
            weights,
            n1,
            n2,
            clip_epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        self.weights[0] + self.weights[1..].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Unclipped `p̂(x)`.
    pub fn probability(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.logit(x))
    }

    /// `ρ̂(e1, e2)(x)`, or `ρ̂(e2, e1)(x)` when `reversed`.
    pub fn ratio(&self, x: ArrayView1<f64>, reversed: bool) -> f64 {
        let p = self.probability(x);
        let eps = self.clip_epsilon;
        let p = p.clamp(eps, 1.0 - eps);
        let (p, q, n_num, n_den) = if reversed {
            (1.0 - p, p, self.n1, self.n2)
        } else {
            (p, 1.0 - p, self.n2, self.n1)
        };
        (n_num as f64 * p) / (n_den as f64 * q)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct LogisticProblem {
    /// Standardised design with a leading column of ones.
    design: Array2<f64>,
    labels: Array1<f64>,
    ridge: f64,
}

impl LogisticProblem {
    fn objective(&self, theta: &Array1<f64>) -> f64 {
        let z = self.design.dot(theta);
        let n = self.labels.len() as f64;
        let nll: f64 = z
            .iter()
            .zip(&self.labels)
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum::<f64>()
            / n;
        nll + 0.5 * self.ridge * theta.iter().skip(1).map(|t| t * t).sum::<f64>()
    }

    fn gradient(&self, theta: &Array1<f64>) -> Array1<f64> {
        let z = self.design.dot(theta);
        let n = self.labels.len() as f64;
        let resid = Array1::from_iter(z.iter().zip(&self.labels).map(|(&z, &y)| sigmoid(z) - y));
        let mut g = self.design.t().dot(&resid) / n;
        for (gj, tj) in g.iter_mut().zip(theta.iter()).skip(1) {
            *gj += self.ridge * tj;
        }
        g
    }
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fit the logistic classifier on `C_{e1,e2}` (label 1 for `d1` rows).
///
/// Covariates are standardised internally for conditioning; the returned
/// weights act on raw covariates. Gradient descent with Armijo
/// backtracking, trial steps seeded by the Barzilai-Borwein estimate.
pub fn fit_pair_classifier(
    e1: &EnvironmentId,
    d1: &EnvDataset,
    e2: &EnvironmentId,
    d2: &EnvDataset,
    cfg: &ClassifierConfig,
) -> Result<PairClassifier> {
    cfg.validate()?;
    if d1.dim() != d2.dim() {
        return Err(CricError::Data(format!(
            "feature dims differ: {} vs {}",
            d1.dim(),
            d2.dim()
        )));
    }
    let (n1, n2, d) = (d1.len(), d2.len(), d1.dim());
    let n = n1 + n2;
    let raw = ndarray::concatenate(Axis(0), &[d1.covariates().view(), d2.covariates().view()])
        .expect("dims checked");
    let mean = raw.mean_axis(Axis(0)).expect("non-empty");
    let sd = raw.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let mut design = Array2::ones((n, d + 1));
    for (mut row, x) in design.rows_mut().into_iter().zip(raw.rows()) {
        for j in 0..d {
            row[j + 1] = (x[j] - mean[j]) / sd[j];
        }
    }
    let labels = Array1::from_iter((0..n).map(|i| if i < n1 { 1.0 } else { 0.0 }));
    let problem = LogisticProblem {
        design,
        labels,
        ridge: cfg.ridge,
    };

    let mut theta = Array1::<f64>::zeros(d + 1);
    let mut f = problem.objective(&theta);
    let mut g = problem.gradient(&theta);
    let mut step = 1.0;
    let mut converged = inf_norm(&g) <= cfg.tolerance;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let g_sq = g.dot(&g);
        let mut t = step;
        let (next, f_next) = loop {
            let cand = &theta - &(t * &g);
            let fc = problem.objective(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * g_sq {
                break (cand, fc);
            }
            t *= 0.5;
            if t < 1e-20 {
                // No further decrease representable; treat as stationary.
                break (theta.clone(), f);
            }
        };
        let g_next = problem.gradient(&next);
        let s = &next - &theta;
        let yv = &g_next - &g;
        let sy = s.dot(&yv);
        step = if sy > 0.0 { (s.dot(&s) / sy).clamp(1e-8, 1e8) } else { (2.0 * t).min(1e8) };
        let stalled = s.iter().all(|v| *v == 0.0);
        theta = next;
        f = f_next;
        g = g_next;
        converged = inf_norm(&g) <= cfg.tolerance;
        if stalled && !converged {
            break;
        }
    }
    if !converged {
        return Err(CricError::FitNotConverged {
            iterations,
            grad_norm: inf_norm(&g),
        });
    }

    let mut weights = vec![0.0; d + 1];
    weights[0] = theta[0];
    for j in 0..d {
        weights[j + 1] = theta[j + 1] / sd[j];
        weights[0] -= theta[j + 1] * mean[j] / sd[j];
    }
    PairClassifier::new(e1.clone(), e2.clone(), weights, n1, n2, cfg.clip_epsilon)
}

/// Mean vector and covariance of a multivariate normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Self {
        Self { mean, covariance }
    }

    /// `N(mean, σ² I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Self {
        let d = mean.len();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        Self { mean, covariance }
    }

    /// Sample mean and unbiased sample covariance.
    pub fn estimate(env: &EnvDataset) -> Self {
        let x = env.covariates();
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let centered = x - &mean;
        let cov = centered.t().dot(&centered) / (n - 1.0);
        Self {
            mean: mean.to_vec(),
            covariance: cov.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// Cholesky-factored log density.
#[derive(Debug, Clone)]
struct GaussianDensity {
    mean: DVector<f64>,
    lower: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianDensity {
    fn new(p: &GaussianParams) -> Result<Self> {
        let d = p.mean.len();
        if d == 0 || p.covariance.len() != d || p.covariance.iter().any(|r| r.len() != d) {
            return Err(CricError::Numeric("Gaussian parameter shapes do not conform".into()));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| p.covariance[i][j]);
        if cov.iter().chain(p.mean.iter()).any(|v| !v.is_finite()) {
            return Err(CricError::Numeric("non-finite Gaussian parameter".into()));
        }
        let asym = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .any(|(i, j)| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (cov[(i, j)].abs() + 1.0));
        if asym {
            return Err(CricError::Numeric("covariance is not symmetric".into()));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| CricError::Numeric("covariance is not positive definite".into()))?;
        let lower = chol.l();
        let log_det: f64 = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(CricError::Numeric("covariance is singular".into()));
        }
        Ok(Self {
            mean: DVector::from_vec(p.mean.clone()),
            lower,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    fn log_density(&self, x: ArrayView1<f64>) -> f64 {
        let mut z = DVector::from_iterator(x.len(), x.iter().copied()) - &self.mean;
        self.lower.solve_lower_triangular_mut(&mut z);
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// `φ(x; params1) / φ(x; params2)`.
pub fn exact_gaussian_ratio(
    params1: &GaussianParams,
    params2: &GaussianParams,
    x: ArrayView1<f64>,
) -> Result<f64> {
    let g1 = GaussianDensity::new(params1)?;
    let g2 = GaussianDensity::new(params2)?;
    if x.len() != params1.mean.len() || x.len() != params2.mean.len() {
        return Err(CricError::Data("point dimension does not match Gaussian parameters".into()));
    }
    Ok((g1.log_density(x) - g2.log_density(x)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    Classifier,
    ExactGaussian,
}

impl std::str::FromStr for RatioMode {
    type Err = CricError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier" => Ok(RatioMode::Classifier),
            "exact-gaussian" | "exact_gaussian" => Ok(RatioMode::ExactGaussian),
            other => Err(CricError::Config(format!("unknown ratio mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGaussian {
    pub env: EnvironmentId,
    #[serde(flatten)]
    pub params: GaussianParams,
}

#[derive(Serialize, Deserialize)]
struct RatioModelRepr {
    mode: RatioMode,
    environments: Vec<EnvironmentId>,
    #[serde(default)]
    pairs: Vec<PairClassifier>,
    #[serde(default)]
    gaussians: Vec<NamedGaussian>,
}

/// Likelihood ratios for every ordered pair of a dataset's environments.
///
/// Classifier mode stores one fit per unordered pair; the reverse direction
/// swaps the counts and uses `1 − p̂`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RatioModelRepr", into = "RatioModelRepr")]
pub struct RatioModel {
    mode: RatioMode,
    environments: Vec<EnvironmentId>,
    pairs: Vec<PairClassifier>,
    gaussians: Vec<NamedGaussian>,
    densities: Vec<GaussianDensity>,
}

impl From<RatioModel> for RatioModelRepr {
    fn from(m: RatioModel) -> Self {
        Self {
            mode: m.mode,
            environments: m.environments,
            pairs: m.pairs,
            gaussians: m.gaussians,
        }
    }
}

impl TryFrom<RatioModelRepr> for RatioModel {
    type Error = CricError;

    fn try_from(r: RatioModelRepr) -> Result<Self> {
        match r.mode {
            RatioMode::Classifier => Self::from_classifiers(r.environments, r.pairs),
            RatioMode::ExactGaussian => {
                if r.gaussians.iter().map(|g| &g.env).ne(r.environments.iter()) {
                    return Err(CricError::Data("Gaussian parameters do not match environment list".into()));
                }
                Self::exact_gaussian(r.gaussians)
            }
        }
    }
}

impl RatioModel {
    /// Fit one classifier per unordered pair of environments.
    pub fn fit_classifier(data: &MultiEnvDataset, cfg: &ClassifierConfig) -> Result<Self> {
        let envs: Vec<(&EnvironmentId, &EnvDataset)> = data.iter().collect();
        let jobs: Vec<(usize, usize)> = (0..envs.len())
            .flat_map(|i| (i + 1..envs.len()).map(move |j| (i, j)))
            .collect();
        let pairs = jobs
            .par_iter()
            .map(|&(i, j)| fit_pair_classifier(envs[i].0, envs[i].1, envs[j].0, envs[j].1, cfg))
            .collect::<Result<Vec<_>>>()?;
        Self::from_classifiers(data.ids().cloned().collect(), pairs)
    }

    /// Assemble from already-fitted classifiers covering every pair.
    pub fn from_classifiers(environments: Vec<EnvironmentId>, pairs: Vec<PairClassifier>) -> Result<Self> {
        for (i, a) in environments.iter().enumerate() {
            for b in &environments[i + 1..] {
                let n = pairs
                    .iter()
                    .filter(|p| (&p.e1 == a && &p.e2 == b) || (&p.e1 == b && &p.e2 == a))
                    .count();
                if n != 1 {
                    return Err(CricError::Data(format!(
                        "expected exactly one classifier for pair ({a}, {b}), found {n}"
                    )));
                }
            }
        }
        if let Some(p) = pairs
            .iter()
            .find(|p| !environments.contains(&p.e1) || !environments.contains(&p.e2) || p.e1 == p.e2)
        {
            return Err(CricError::Data(format!("classifier for unexpected pair ({}, {})", p.e1, p.e2)));
        }
        Ok(Self {
            mode: RatioMode::Classifier,
            environments,
            pairs,
            gaussians: Vec::new(),
            densities: Vec::new(),
        })
    }

    /// Gaussian ratios from per-environment sample moments.
    pub fn fit_gaussian(data: &MultiEnvDataset) -> Result<Self> {
        Self::exact_gaussian(
            data.iter()
                .map(|(id, e)| NamedGaussian {
                    env: id.clone(),
                    params: GaussianParams::estimate(e),
                })
                .collect(),
        )
    }

    /// Gaussian ratios from known parameters.
    pub fn exact_gaussian(gaussians: Vec<NamedGaussian>) -> Result<Self> {
        let densities = gaussians
            .iter()
            .map(|g| GaussianDensity::new(&g.params))
            .collect::<Result<Vec<_>>>()?;
        let environments: Vec<EnvironmentId> = gaussians.iter().map(|g| g.env.clone()).collect();
        for (i, e) in environments.iter().enumerate() {
            if environments[..i].contains(e) {
                return Err(CricError::Data(format!("duplicate Gaussian for '{e}'")));
            }
        }
        if let Some(d) = gaussians.first().map(|g| g.params.mean.len()) {
            if gaussians.iter().any(|g| g.params.mean.len() != d) {
                return Err(CricError::Data("Gaussian dimensions differ".into()));
            }
        }
        Ok(Self {
            mode: RatioMode::ExactGaussian,
            environments,
            pairs: Vec::new(),
            gaussians,
            densities,
        })
    }

    /// Fit in the requested mode.
    pub fn fit(data: &MultiEnvDataset, mode: RatioMode, cfg: &ClassifierConfig) -> Result<Self> {
        match mode {
            RatioMode::Classifier => Self::fit_classifier(data, cfg),
            RatioMode::ExactGaussian => Self::fit_gaussian(data),
        }
    }

    pub fn mode(&self) -> RatioMode {
        self.mode
    }

    pub fn environments(&self) -> &[EnvironmentId] {
        &self.environments
    }

    pub fn pair_classifiers(&self) -> &[PairClassifier] {
        &self.pairs
    }

    fn env_index(&self, e: &EnvironmentId) -> Result<usize> {
        self.environments
            .iter()
            .position(|k| k == e)
            .ok_or_else(|| CricError::Lookup(format!("environment '{e}' not in ratio model")))
    }

    fn classifier_for(&self, e: &EnvironmentId, e_prime: &EnvironmentId) -> Result<(&PairClassifier, bool)> {
        self.pairs
            .iter()
            .find_map(|p| {
                if &p.e1 == e && &p.e2 == e_prime {
                    Some((p, false))
                } else if &p.e1 == e_prime && &p.e2 == e {
                    Some((p, true))
                } else {
                    None
                }
            })
            .ok_or_else(|| CricError::Lookup(format!("pair ({e}, {e_prime})")))
    }

    /// Estimated `dP^e / dP^{e'}` at `x`; exactly 1 when `e == e_prime`.
    pub fn ratio_at(&self, e: &EnvironmentId, e_prime: &EnvironmentId, x: ArrayView1<f64>) -> Result<f64> {
        let i = self.env_index(e)?;
        let j = self.env_index(e_prime)?;
        if i == j {
            return Ok(1.0);
        }
        self.check_dim(x.len())?;
        Ok(match self.mode {
            RatioMode::Classifier => {
                let (clf, reversed) = self.classifier_for(e, e_prime)?;
                clf.ratio(x, reversed)
            }
            RatioMode::ExactGaussian => {
                (self.densities[i].log_density(x) - self.densities[j].log_density(x)).exp()
            }
        })
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let expected = match self.mode {
            RatioMode::Classifier => self.pairs.first().map(|p| p.dim()),
            RatioMode::ExactGaussian => self.gaussians.first().map(|g| g.params.mean.len()),
        };
        match expected {
            Some(k) if k != d => Err(CricError::Data(format!(
                "ratio model expects {k} features, got {d}"
            ))),
            _ => Ok(()),
        }
    }

    /// `ln ρ̂(e, e')` at every row of `xs`.
    pub fn log_weights(&self, e: &EnvironmentId, e_prime: &EnvironmentId, xs: &Array2<f64>) -> Result<Array1<f64>> {
        let i = self.env_index(e)?;
        let j = self.env_index(e_prime)?;
        match self.mode {
            RatioMode::ExactGaussian if i != j => {
                self.check_dim(xs.ncols())?;
                let (a, b) = (&self.densities[i], &self.densities[j]);
                Ok(xs.rows().into_iter().map(|x| a.log_density(x) - b.log_density(x)).collect())
            }
            _ => Ok(self.weights(e, e_prime, xs)?.mapv(f64::ln)),
        }
    }

    /// Weights rescaled to mean exactly one, computed from log weights so
    /// that ratios too large to represent still normalise.
    pub fn normalized_weights(&self, e: &EnvironmentId, e_prime: &EnvironmentId, xs: &Array2<f64>) -> Result<Array1<f64>> {
        let lw = self.log_weights(e, e_prime, xs)?;
        let max = lw.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        if !max.is_finite() {
            return Err(CricError::Numeric(format!("non-finite log weights for ({e}, {e_prime})")));
        }
        let mut w = lw.mapv(|v| (v - max).exp());
        let mean = w.mean().expect("non-empty");
        w.mapv_inplace(|v| v / mean);
        Ok(w)
    }

    /// `ρ̂(e, e')` at every row of `xs` (normally the `e'` sample).
    pub fn weights(&self, e: &EnvironmentId, e_prime: &EnvironmentId, xs: &Array2<f64>) -> Result<Array1<f64>> {
        let i = self.env_index(e)?;
        let j = self.env_index(e_prime)?;
        if i == j {
            return Ok(Array1::ones(xs.nrows()));
        }
        self.check_dim(xs.ncols())?;
        Ok(match self.mode {
            RatioMode::Classifier => {
                let (clf, reversed) = self.classifier_for(e, e_prime)?;
                xs.rows().into_iter().map(|x| clf.ratio(x, reversed)).collect()
            }
            RatioMode::ExactGaussian => {
                let (a, b) = (&self.densities[i], &self.densities[j]);
                xs.rows()
                    .into_iter()
                    .map(|x| (a.log_density(x) - b.log_density(x)).exp())
                    .collect()
            }
        })
    }
}

/// Weight summary for one ordered pair, over the `e'` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub e: EnvironmentId,
    pub e_prime: EnvironmentId,
    pub n: usize,
    pub mean_weight: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    /// `(Σw)² / Σw²`.
    pub effective_sample_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDiagnostics {
    pub mode: RatioMode,
    pub pairs: Vec<PairDiagnostic>,
}

pub fn effective_sample_size(w: &Array1<f64>) -> f64 {
    let s: f64 = w.sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    s * s / s2
}

/// Per ordered pair: mean, range and effective sample size of the weights.
pub fn ratio_diagnostics(model: &RatioModel, data: &MultiEnvDataset) -> Result<RatioDiagnostics> {
    let mut pairs = Vec::new();
    for e in data.ids() {
        for (e_prime, env) in data.iter() {
            if e == e_prime {
                continue;
            }
            let w = model.weights(e, e_prime, env.covariates())?;
            pairs.push(PairDiagnostic {
                e: e.clone(),
                e_prime: e_prime.clone(),
                n: w.len(),
                mean_weight: w.mean().expect("n >= 2"),
                min_weight: w.iter().copied().fold(f64::INFINITY, f64::min),
                max_weight: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                effective_sample_size: effective_sample_size(&w),
            });
        }
    }
    Ok(RatioDiagnostics {
        mode: model.mode(),
        pairs,
    })
}
