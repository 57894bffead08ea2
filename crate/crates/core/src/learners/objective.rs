//! Training objectives over linear predictors `f(x) = βᵀx + b` with
//! analytic gradients, and the descent loop that minimises them.
//!
//! The parameter vector is `θ = [β_1, …, β_d, b]`. Every objective adds
//! `l2 · ‖β‖²`; the intercept is never penalised.

use ndarray::{s, Array1, Array2};

use crate::data::{EnvDataset, MultiEnvDataset};
use crate::error::{CricError, Result};

/// Scalar objective with a gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, theta: &Array1<f64>) -> f64 {
        self.value_and_gradient(theta).0
    }

    fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>);
}

/// Second-moment summary of one environment: with `x̃ = [x, 1]`,
/// `gram = (1/n) Σ x̃x̃ᵀ`, `cross = (1/n) Σ x̃ y`, `yy = (1/n) Σ y²`.
///
/// Every objective here is a polynomial in these moments, so evaluations
/// cost `O(d²)` regardless of sample size.
#[derive(Debug, Clone)]
pub struct EnvMoments {
    pub n: usize,
    pub gram: Array2<f64>,
    pub cross: Array1<f64>,
    pub yy: f64,
}

impl EnvMoments {
    pub fn new(env: &EnvDataset) -> Self {
        let (n, d) = (env.len(), env.dim());
        let nf = n as f64;
        let mut design = Array2::ones((n, d + 1));
        design.slice_mut(s![.., ..d]).assign(env.covariates());
        let gram = design.t().dot(&design) / nf;
        let cross = design.t().dot(env.outcomes()) / nf;
        let yy = env.outcomes().dot(env.outcomes()) / nf;
        Self { n, gram, cross, yy }
    }

    fn quad(&self, theta: &Array1<f64>) -> (Array1<f64>, f64, f64) {
        let g_theta = self.gram.dot(theta);
        (g_theta.clone(), theta.dot(&g_theta), theta.dot(&self.cross))
    }

    /// Mean squared error.
    pub fn risk(&self, theta: &Array1<f64>) -> f64 {
        let (_, tgt, th) = self.quad(theta);
        tgt - 2.0 * th + self.yy
    }

    pub(crate) fn terms(&self, theta: &Array1<f64>, with_dummy: bool) -> EnvTerms {
        let (g_theta, tgt, th) = self.quad(theta);
        let risk = tgt - 2.0 * th + self.yy;
        let risk_grad = 2.0 * (&g_theta - &self.cross);
        let (dummy_grad, dummy_grad_grad) = if with_dummy {
            // (2/n) Σ f (f - y) and its gradient (2/n) Σ (2f - y) x̃.
            (2.0 * (tgt - th), 2.0 * (2.0 * &g_theta - &self.cross))
        } else {
            (0.0, Array1::zeros(0))
        };
        EnvTerms {
            n: self.n,
            risk,
            risk_grad,
            dummy_grad,
            dummy_grad_grad,
        }
    }
}

/// Risk and IRMv1 gradient statistics of one environment at `θ`.
pub(crate) struct EnvTerms {
    pub n: usize,
    pub risk: f64,
    pub risk_grad: Array1<f64>,
    /// `∂R/∂w` at `w = 1` for the scalar dummy multiplier.
    pub dummy_grad: f64,
    pub dummy_grad_grad: Array1<f64>,
}

fn moments(data: &MultiEnvDataset) -> Vec<EnvMoments> {
    data.iter().map(|(_, e)| EnvMoments::new(e)).collect()
}

fn add_ridge(value: &mut f64, grad: &mut Array1<f64>, theta: &Array1<f64>, l2: f64) {
    if l2 == 0.0 {
        return;
    }
    let d = theta.len() - 1;
    let beta = theta.slice(s![..d]);
    *value += l2 * beta.dot(&beta);
    grad.slice_mut(s![..d]).scaled_add(2.0 * l2, &beta);
}

/// Mean squared error over the pooled sample.
pub struct PooledMse {
    moments: Vec<EnvMoments>,
    l2: f64,
}

impl PooledMse {
    pub fn new(data: &MultiEnvDataset, l2: f64) -> Self {
        Self {
            moments: moments(data),
            l2,
        }
    }
}

impl Objective for PooledMse {
    fn dim(&self) -> usize {
        self.moments[0].cross.len()
    }

    fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let total: usize = self.moments.iter().map(|m| m.n).sum();
        let mut value = 0.0;
        let mut grad = Array1::zeros(self.dim());
        for m in &self.moments {
            let t = m.terms(theta, false);
            let w = t.n as f64 / total as f64;
            value += w * t.risk;
            grad.scaled_add(w, &t.risk_grad);
        }
        add_ridge(&mut value, &mut grad, theta, self.l2);
        (value, grad)
    }
}

/// `mean_e [R^e + λ (∂_w R^e|_{w=1})²]`.
pub struct Irmv1Objective {
    moments: Vec<EnvMoments>,
    lambda: f64,
    l2: f64,
}

impl Irmv1Objective {
    pub fn new(data: &MultiEnvDataset, lambda: f64, l2: f64) -> Self {
        Self {
            moments: moments(data),
            lambda,
            l2,
        }
    }
}

impl Objective for Irmv1Objective {
    fn dim(&self) -> usize {
        self.moments[0].cross.len()
    }

    fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let k = self.moments.len() as f64;
        let mut value = 0.0;
        let mut grad = Array1::zeros(self.dim());
        for m in &self.moments {
            let t = m.terms(theta, true);
            value += (t.risk + self.lambda * t.dummy_grad * t.dummy_grad) / k;
            grad.scaled_add(1.0 / k, &t.risk_grad);
            grad.scaled_add(2.0 * self.lambda * t.dummy_grad / k, &t.dummy_grad_grad);
        }
        add_ridge(&mut value, &mut grad, theta, self.l2);
        (value, grad)
    }
}

/// `mean_e R^e + λ Var_e(R^e)` with the population variance.
pub struct VrexObjective {
    moments: Vec<EnvMoments>,
    lambda: f64,
    l2: f64,
}

impl VrexObjective {
    pub fn new(data: &MultiEnvDataset, lambda: f64, l2: f64) -> Self {
        Self {
            moments: moments(data),
            lambda,
            l2,
        }
    }
}

impl Objective for VrexObjective {
    fn dim(&self) -> usize {
        self.moments[0].cross.len()
    }

    fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let terms: Vec<EnvTerms> = self.moments.iter().map(|m| m.terms(theta, false)).collect();
        let k = terms.len() as f64;
        let mean = terms.iter().map(|t| t.risk).sum::<f64>() / k;
        let var = terms.iter().map(|t| (t.risk - mean).powi(2)).sum::<f64>() / k;
        let mut value = mean + self.lambda * var;
        let mut grad = Array1::zeros(self.dim());
        for t in &terms {
            grad.scaled_add(1.0 / k + 2.0 * self.lambda * (t.risk - mean) / k, &t.risk_grad);
        }
        add_ridge(&mut value, &mut grad, theta, self.l2);
        (value, grad)
    }
}

/// Restricts an objective to `b = 0` by zeroing the intercept gradient;
/// descent started at zero then never moves the intercept.
pub struct NoIntercept<'a>(pub &'a dyn Objective);

impl Objective for NoIntercept<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, theta: &Array1<f64>) -> f64 {
        self.0.value(theta)
    }

    fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let (v, mut g) = self.0.value_and_gradient(theta);
        let last = g.len() - 1;
        g[last] = 0.0;
        (v, g)
    }
}

/// `θ̃ ↦ obj(T θ̃)` for a fixed linear map `T`; the gradient is `Tᵀ ∇obj`.
pub struct Reparam<'a> {
    pub inner: &'a dyn Objective,
    pub map: Array2<f64>,
}

impl Reparam<'_> {
    /// Parameters on covariates standardised to zero mean (when `center`)
    /// and unit pooled standard deviation.
    pub fn standardizing<'a>(inner: &'a dyn Objective, data: &MultiEnvDataset, center: bool) -> Reparam<'a> {
        let (x, _) = data.pooled();
        let d = x.ncols();
        let mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
        let sd = x.std_axis(ndarray::Axis(0), 0.0);
        let mut map = Array2::zeros((d + 1, d + 1));
        map[[d, d]] = 1.0;
        for j in 0..d {
            let s = if sd[j] > 0.0 { sd[j] } else { 1.0 };
            map[[j, j]] = 1.0 / s;
            if center {
                map[[d, j]] = -mean[j] / s;
            }
        }
        Reparam { inner, map }
    }

    pub fn to_inner(&self, theta: &Array1<f64>) -> Array1<f64> {
        self.map.dot(theta)
    }
}

impl Objective for Reparam<'_> {
    fn dim(&self) -> usize {
        self.map.ncols()
    }

    fn value(&self, theta: &Array1<f64>) -> f64 {
        self.inner.value(&self.to_inner(theta))
    }

    fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let (v, g) = self.inner.value_and_gradient(&self.to_inner(theta));
        (v, self.map.t().dot(&g))
    }
}

/// Descent options.
#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub initial_step: f64,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct DescentTrace {
    pub theta: Array1<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Stopped because no step gave a representable decrease.
    pub stalled: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub losses: Vec<f64>,
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Full-batch gradient descent with Armijo backtracking. Trial steps are
/// seeded by the Barzilai-Borwein estimate, falling back to doubling the
/// last accepted step; rejections halve the trial.
pub fn minimize(obj: &dyn Objective, theta0: Array1<f64>, opts: DescentOptions) -> Result<DescentTrace> {
    let mut theta = theta0;
    let (mut f, mut g) = obj.value_and_gradient(&theta);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(CricError::Diverged {
            iteration: 0,
            last_finite_loss: f64::NAN,
        });
    }
    let mut losses = vec![f];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= opts.grad_tolerance;
    let mut stalled = false;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let g_sq = g.dot(&g);
        let mut t = step;
        let accepted = loop {
            let cand = &theta - &(t * &g);
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * g_sq {
                break Some((cand, fc));
            }
            t *= 0.5;
            if t < 1e-300 || t * inf_norm(&g) <= f64::EPSILON * (1.0 + inf_norm(&theta)) * 1e-3 {
                break None;
            }
        };
        // No representable decrease along the gradient: numerically stationary.
        let Some((cand, fc)) = accepted.filter(|(_, fc)| *fc < f) else {
            stalled = true;
            break;
        };
        let (_, gc) = obj.value_and_gradient(&cand);
        if gc.iter().any(|v| !v.is_finite()) {
            return Err(CricError::Diverged {
                iteration: iterations,
                last_finite_loss: f,
            });
        }
        let s = &cand - &theta;
        let sy = s.dot(&(&gc - &g));
        step = if sy > 0.0 { s.dot(&s) / sy } else { 2.0 * t }.clamp(1e-12, 1e12);
        theta = cand;
        f = fc;
        g = gc;
        losses.push(f);
        converged = inf_norm(&g) <= opts.grad_tolerance;
    }
    Ok(DescentTrace {
        theta,
        loss: f,
        iterations,
        converged,
        stalled,
        losses,
    })
}
