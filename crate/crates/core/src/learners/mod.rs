//! Linear ERM, IRMv1 and V-REx trainers with squared-error loss.

pub mod objective;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{EnvDataset, MultiEnvDataset};
use crate::error::{CricError, Result};
use objective::{minimize, DescentOptions, DescentTrace, Irmv1Objective, NoIntercept, Objective, PooledMse, Reparam, VrexObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Pooled ERM on raw covariates; the CRIC baseline.
    ErmBaseline,
    IrmStyle,
}

#[derive(Serialize, Deserialize)]
struct PredictorRepr {
    kind: PredictorKind,
    /// `d × k` row-major; absent for the identity representation.
    phi: Option<Vec<Vec<f64>>>,
    w: Vec<f64>,
    intercept: f64,
}

/// `f(x) = wᵀ Φ(x) + intercept` with a linear (or identity) `Φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictorRepr", into = "PredictorRepr")]
pub struct Predictor {
    kind: PredictorKind,
    phi: Option<Array2<f64>>,
    w: Array1<f64>,
    intercept: f64,
    /// `Φ w`, the effective coefficients on raw covariates.
    coef: Array1<f64>,
}

impl From<Predictor> for PredictorRepr {
    fn from(p: Predictor) -> Self {
        Self {
            kind: p.kind,
            phi: p.phi.map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect()),
            w: p.w.to_vec(),
            intercept: p.intercept,
        }
    }
}

impl TryFrom<PredictorRepr> for Predictor {
    type Error = CricError;

    fn try_from(r: PredictorRepr) -> Result<Self> {
        let phi = match r.phi {
            None => None,
            Some(rows) => {
                let d = rows.len();
                let k = rows.first().map(Vec::len).unwrap_or(0);
                if rows.iter().any(|row| row.len() != k) {
                    return Err(CricError::Data("ragged phi matrix".into()));
                }
                Some(
                    Array2::from_shape_vec((d, k), rows.into_iter().flatten().collect())
                        .map_err(|e| CricError::Data(e.to_string()))?,
                )
            }
        };
        Predictor::new(r.kind, phi, Array1::from(r.w), r.intercept)
    }
}

impl Predictor {
    pub fn new(kind: PredictorKind, phi: Option<Array2<f64>>, w: Array1<f64>, intercept: f64) -> Result<Self> {
        if let Some(phi) = &phi {
            if phi.ncols() != w.len() || phi.nrows() == 0 {
                return Err(CricError::Data(format!(
                    "phi is {}x{} but w has length {}",
                    phi.nrows(),
                    phi.ncols(),
                    w.len()
                )));
            }
        }
        if w.is_empty() {
            return Err(CricError::Data("predictor has no coefficients".into()));
        }
        let finite = w.iter().chain(phi.iter().flat_map(|m| m.iter())).all(|v| v.is_finite())
            && intercept.is_finite();
        if !finite {
            return Err(CricError::Numeric("predictor parameters must be finite".into()));
        }
        let coef = match &phi {
            Some(m) => m.dot(&w),
            None => w.clone(),
        };
        Ok(Self {
            kind,
            phi,
            w,
            intercept,
            coef,
        })
    }

    /// Identity representation with linear head.
    pub fn linear(kind: PredictorKind, w: Array1<f64>, intercept: f64) -> Result<Self> {
        Self::new(kind, None, w, intercept)
    }

    /// `Φ = coefficient column`, dummy scalar classifier `w = 1`.
    pub fn with_dummy_classifier(phi: Array1<f64>, intercept: f64) -> Result<Self> {
        let d = phi.len();
        let phi = phi.into_shape_with_order((d, 1)).expect("column");
        Self::new(PredictorKind::IrmStyle, Some(phi), Array1::ones(1), intercept)
    }

    /// Predicts zero everywhere (`Φ ≡ 0`).
    pub fn zero(d: usize, kind: PredictorKind) -> Self {
        Self::linear(kind, Array1::zeros(d), 0.0).expect("zeros are valid")
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn phi(&self) -> Option<&Array2<f64>> {
        self.phi.as_ref()
    }

    pub fn w(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Effective coefficients on raw covariates.
    pub fn coefficients(&self) -> &Array1<f64> {
        &self.coef
    }

    pub fn input_dim(&self) -> usize {
        self.coef.len()
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        self.coef.dot(&x) + self.intercept
    }

    pub fn predict_batch(&self, xs: &Array2<f64>) -> Array1<f64> {
        xs.dot(&self.coef) + self.intercept
    }

    /// `x ↦ α f(x) + c`, same kind and representation.
    pub fn affine(&self, alpha: f64, shift: f64) -> Result<Self> {
        Self::new(self.kind, self.phi.clone(), &self.w * alpha, alpha * self.intercept + shift)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        self.affine(alpha, 0.0)
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.input_dim() != d {
            return Err(CricError::Data(format!(
                "predictor expects {} features, data has {d}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Erm,
    Irmv1,
    Vrex,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Erm => "erm",
            Method::Irmv1 => "irmv1",
            Method::Vrex => "vrex",
        })
    }
}

impl FromStr for Method {
    type Err = CricError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erm" => Ok(Method::Erm),
            "irmv1" | "irm" => Ok(Method::Irmv1),
            "vrex" | "v-rex" | "rex-v" | "rex" => Ok(Method::Vrex),
            other => Err(CricError::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Hyperparameters shared by the three trainers. The loss is squared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Penalty weight; ignored by ERM.
    pub lambda: f64,
    /// Initial trial step of the line search.
    pub learning_rate: f64,
    /// Maximum number of descent steps.
    pub epochs: usize,
    /// Ridge on the coefficients (not the intercept).
    pub l2: f64,
    /// Parameters start at zero, so training never draws from this seed.
    pub seed: u64,
    /// Early stop once the gradient infinity norm reaches this value.
    pub grad_tolerance: f64,
    /// When false the intercept is held at zero.
    pub fit_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e4,
            learning_rate: 1e-3,
            epochs: 50_000,
            l2: 0.0,
            seed: 0,
            grad_tolerance: 1e-9,
            fit_intercept: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda.is_finite()
            && self.lambda >= 0.0
            && self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.l2.is_finite()
            && self.l2 >= 0.0
            && self.grad_tolerance.is_finite()
            && self.grad_tolerance >= 0.0;
        if !ok {
            return Err(CricError::Config(format!("invalid training config {self:?}")));
        }
        if self.epochs == 0 {
            return Err(CricError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    fn descent(&self) -> DescentOptions {
        DescentOptions {
            initial_step: self.learning_rate,
            max_iterations: self.epochs,
            grad_tolerance: self.grad_tolerance,
        }
    }
}

/// Trained predictor with the final objective value.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub predictor: Predictor,
    pub loss: f64,
    pub iterations: usize,
    /// Gradient tolerance reached.
    pub converged: bool,
    /// Stopped early at a point where the objective could not be decreased
    /// further in floating point.
    pub stalled: bool,
}

/// Mean squared error of `p` on `d`.
pub fn risk(p: &Predictor, d: &EnvDataset) -> f64 {
    let r = p.predict_batch(d.covariates()) - d.outcomes();
    r.dot(&r) / d.len() as f64
}

/// `(∂/∂w R(w · f))²` at `w = 1`, i.e. `((2/n) Σ f(x_i)(f(x_i) − y_i))²`.
pub fn irmv1_penalty(p: &Predictor, d: &EnvDataset) -> f64 {
    let f = p.predict_batch(d.covariates());
    let r = &f - d.outcomes();
    let g = 2.0 * f.dot(&r) / d.len() as f64;
    g * g
}

/// Population variance of per-environment risks.
pub fn vrex_penalty(risks: &[f64]) -> Result<f64> {
    if risks.len() < 2 {
        return Err(CricError::Config(format!(
            "variance penalty needs at least 2 risks, got {}",
            risks.len()
        )));
    }
    let k = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / k;
    Ok(risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k)
}

fn split_theta(theta: &Array1<f64>) -> (Array1<f64>, f64) {
    let d = theta.len() - 1;
    (theta.slice(s![..d]).to_owned(), theta[d])
}

/// Descent runs on standardised covariates; the result is mapped back.
fn run(obj: &dyn Objective, data: &MultiEnvDataset, cfg: &TrainConfig) -> Result<(Array1<f64>, f64, DescentTrace)> {
    let std_obj = Reparam::standardizing(obj, data, cfg.fit_intercept);
    let masked = NoIntercept(&std_obj);
    let search: &dyn Objective = if cfg.fit_intercept { &std_obj } else { &masked };
    let trace = minimize(search, Array1::zeros(obj.dim()), cfg.descent())?;
    let (beta, b) = split_theta(&std_obj.to_inner(&trace.theta));
    Ok((beta, b, trace))
}

/// Train `method` on `data`.
pub fn train(method: Method, data: &MultiEnvDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if method != Method::Erm && data.num_envs() < 2 {
        return Err(CricError::Structural(format!(
            "{method} needs at least 2 environments, got {}",
            data.num_envs()
        )));
    }
    let (predictor, trace) = match method {
        Method::Erm => {
            let (beta, b, trace) = run(&PooledMse::new(data, cfg.l2), data, cfg)?;
            (Predictor::linear(PredictorKind::ErmBaseline, beta, b)?, trace)
        }
        Method::Irmv1 => {
            let (beta, b, trace) = run(&Irmv1Objective::new(data, cfg.lambda, cfg.l2), data, cfg)?;
            (Predictor::with_dummy_classifier(beta, b)?, trace)
        }
        Method::Vrex => {
            let (beta, b, trace) = run(&VrexObjective::new(data, cfg.lambda, cfg.l2), data, cfg)?;
            (Predictor::linear(PredictorKind::IrmStyle, beta, b)?, trace)
        }
    };
    Ok(TrainOutcome {
        predictor,
        loss: trace.loss,
        iterations: trace.iterations,
        converged: trace.converged,
        stalled: trace.stalled,
    })
}

pub fn train_erm(data: &MultiEnvDataset, cfg: &TrainConfig) -> Result<Predictor> {
    train(Method::Erm, data, cfg).map(|o| o.predictor)
}

pub fn train_irmv1(data: &MultiEnvDataset, cfg: &TrainConfig) -> Result<Predictor> {
    train(Method::Irmv1, data, cfg).map(|o| o.predictor)
}

pub fn train_vrex(data: &MultiEnvDataset, cfg: &TrainConfig) -> Result<Predictor> {
    train(Method::Vrex, data, cfg).map(|o| o.predictor)
}
