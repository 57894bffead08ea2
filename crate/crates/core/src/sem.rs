//! Linear structural-equation generator for the synthetic benchmark.
//!
//! Per environment with scale `e`:
//!
//! ```text
//! H  ~ N(0, e² I)                      (dim_x1)
//! X1 = W_h1 H + N(0, e² I)             (dim_x1)
//! Y  = 1ᵀ X1 + w_hy · H + N(0, σ_y²)   (scalar)
//! X2 = w_y2 Y + N(0, σ_2² I)           (dim_x2)
//! ```
//!
//! Fully-observed settings zero `W_h1`, `w_hy` and `w_y2`; partially-observed
//! ones draw them entrywise from N(0, 1). Homoskedastic Y-noise uses
//! `σ_y² = e², σ_2² = 1`, heteroskedastic uses `σ_y² = 1, σ_2² = e²`.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{default_feature_names, EnvDataset, EnvironmentId, MultiEnvDataset};
use crate::error::{CricError, Result};
use crate::rng::{self, tags};

/// The four unscrambled benchmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "POU")]
    Pou,
    #[serde(rename = "PEU")]
    Peu,
    #[serde(rename = "FOU")]
    Fou,
    #[serde(rename = "FEU")]
    Feu,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Pou, Setting::Peu, Setting::Fou, Setting::Feu];

    /// Hidden confounding and the `Y → X2` edge are active.
    pub fn partially_observed(self) -> bool {
        matches!(self, Setting::Pou | Setting::Peu)
    }

    /// Environment scale drives the `X2` noise rather than the `Y` noise.
    pub fn heteroskedastic(self) -> bool {
        matches!(self, Setting::Peu | Setting::Feu)
    }

    /// `(σ_y², σ_2²)` for scale `e`.
    pub fn noise_variances(self, e: f64) -> (f64, f64) {
        if self.heteroskedastic() {
            (1.0, e * e)
        } else {
            (e * e, 1.0)
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Pou => "POU",
            Setting::Peu => "PEU",
            Setting::Fou => "FOU",
            Setting::Feu => "FEU",
        })
    }
}

impl FromStr for Setting {
    type Err = CricError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "POU" => Ok(Setting::Pou),
            "PEU" => Ok(Setting::Peu),
            "FOU" => Ok(Setting::Fou),
            "FEU" => Ok(Setting::Feu),
            other => Err(CricError::Config(format!("unknown setting '{other}'"))),
        }
    }
}

/// Every parameter of one SEM replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemConfig {
    pub setting: Setting,
    pub env_scales: Vec<f64>,
    /// Samples drawn per environment, parallel to `env_scales`.
    pub env_sizes: Vec<usize>,
    pub dim_x1: usize,
    pub dim_x2: usize,
    /// `dim_x1 × dim_h`; the hidden dimension equals `dim_x1`.
    pub w_h_to_1: Array2<f64>,
    pub w_h_to_y: Array1<f64>,
    pub w_y_to_2: Array1<f64>,
    /// Fixed to all ones.
    pub w_1_to_y: Array1<f64>,
    pub seed: u64,
}

impl SemConfig {
    /// Benchmark dimensions (5 + 5).
    pub fn new(setting: Setting, env_scales: Vec<f64>, env_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        Self::with_dims(setting, env_scales, env_sizes, 5, 5, seed)
    }

    /// Draws the structural weights for partially-observed settings from
    /// the `seed` weight stream; they stay fixed for every sample drawn
    /// from this config.
    pub fn with_dims(
        setting: Setting,
        env_scales: Vec<f64>,
        env_sizes: Vec<usize>,
        dim_x1: usize,
        dim_x2: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim_h = dim_x1;
        let (w_h_to_1, w_h_to_y, w_y_to_2) = if setting.partially_observed() {
            let mut r = rng::stream(seed, &[tags::WEIGHTS]);
            let w_h1 = Array2::from_shape_simple_fn((dim_x1, dim_h), || r.sample(StandardNormal));
            let w_hy = Array1::from_shape_simple_fn(dim_h, || r.sample(StandardNormal));
            let w_y2 = Array1::from_shape_simple_fn(dim_x2, || r.sample(StandardNormal));
            (w_h1, w_hy, w_y2)
        } else {
            (
                Array2::zeros((dim_x1, dim_h)),
                Array1::zeros(dim_h),
                Array1::zeros(dim_x2),
            )
        };
        let cfg = Self {
            setting,
            env_scales,
            env_sizes,
            dim_x1,
            dim_x2,
            w_h_to_1,
            w_h_to_y,
            w_y_to_2,
            w_1_to_y: Array1::ones(dim_x1),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same structural weights, new environments and sampling seed.
    pub fn resample(&self, env_scales: Vec<f64>, env_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        let cfg = Self {
            env_scales,
            env_sizes,
            seed,
            ..self.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn feature_dim(&self) -> usize {
        self.dim_x1 + self.dim_x2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CricError::Config(m));
        if self.env_scales.is_empty() {
            return bad("env_scales must be non-empty".into());
        }
        if let Some(e) = self.env_scales.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("env scale {e} is not positive"));
        }
        if self.env_sizes.len() != self.env_scales.len() {
            return bad(format!(
                "{} env sizes for {} env scales",
                self.env_sizes.len(),
                self.env_scales.len()
            ));
        }
        if let Some(n) = self.env_sizes.iter().find(|n| **n < 2) {
            return bad(format!("environment size {n} < 2"));
        }
        if self.dim_x1 == 0 || self.dim_x2 == 0 {
            return bad("dim_x1 and dim_x2 must be positive".into());
        }
        let dim_h = self.w_h_to_y.len();
        if self.w_h_to_1.dim() != (self.dim_x1, dim_h)
            || self.w_y_to_2.len() != self.dim_x2
            || self.w_1_to_y.len() != self.dim_x1
        {
            return bad("structural weight shapes do not conform to dim_x1/dim_x2".into());
        }
        let weights = self
            .w_h_to_1
            .iter()
            .chain(self.w_h_to_y.iter())
            .chain(self.w_y_to_2.iter())
            .chain(self.w_1_to_y.iter());
        if weights.clone().any(|v| !v.is_finite()) {
            return bad("structural weights must be finite".into());
        }
        if !self.setting.partially_observed()
            && self
                .w_h_to_1
                .iter()
                .chain(self.w_h_to_y.iter())
                .chain(self.w_y_to_2.iter())
                .any(|v| *v != 0.0)
        {
            return bad(format!(
                "{} requires zero hidden and Y→X2 weights",
                self.setting
            ));
        }
        Ok(())
    }
}

/// Split `total` as evenly as possible over `k` environments, remainder
/// to the first ones.
pub fn even_sizes(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| total / k + usize::from(i < total % k)).collect()
}

/// Label used for an environment of scale `e`.
pub fn env_label(e: f64) -> String {
    format!("{e}")
}

fn normal_matrix(seed: u64, env: usize, var: u64, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    let mut r = rng::stream(seed, &[tags::ENV, env as u64, var]);
    Array2::from_shape_simple_fn((rows, cols), || sd * r.sample::<f64, _>(StandardNormal))
}

/// Draw one dataset with an environment per scale; features are `[X1, X2]`.
pub fn generate_sem(config: &SemConfig) -> Result<MultiEnvDataset> {
    config.validate()?;
    let dim_h = config.w_h_to_y.len();
    let mut envs = Vec::with_capacity(config.env_scales.len());
    for (k, (&e, &n)) in config.env_scales.iter().zip(&config.env_sizes).enumerate() {
        let (var_y, var_2) = config.setting.noise_variances(e);
        let h = normal_matrix(config.seed, k, tags::HIDDEN, n, dim_h, e);
        let x1 = h.dot(&config.w_h_to_1.t()) + normal_matrix(config.seed, k, tags::X1_NOISE, n, config.dim_x1, e);
        let y_noise = normal_matrix(config.seed, k, tags::Y_NOISE, n, 1, var_y.sqrt());
        let y = x1.dot(&config.w_1_to_y) + h.dot(&config.w_h_to_y) + y_noise.column(0);
        let mut x2 = normal_matrix(config.seed, k, tags::X2_NOISE, n, config.dim_x2, var_2.sqrt());
        for (mut row, yi) in x2.rows_mut().into_iter().zip(y.iter()) {
            row.scaled_add(*yi, &config.w_y_to_2);
        }
        let mut x = Array2::zeros((n, config.feature_dim()));
        x.slice_mut(s![.., ..config.dim_x1]).assign(&x1);
        x.slice_mut(s![.., config.dim_x1..]).assign(&x2);
        let id = EnvironmentId::new(env_label(e))?;
        envs.push((id, EnvDataset::new(x, y)?));
    }
    MultiEnvDataset::new(envs, default_feature_names(config.feature_dim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = v.clone().count() as f64;
        let m = v.clone().sum::<f64>() / n;
        v.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn fou_shape_and_zero_weights() {
        let cfg = SemConfig::new(Setting::Fou, vec![0.2, 2.0, 5.0], vec![50, 50, 50], 1).unwrap();
        assert!(cfg.w_h_to_1.iter().chain(&cfg.w_h_to_y).chain(&cfg.w_y_to_2).all(|v| *v == 0.0));
        let data = generate_sem(&cfg).unwrap();
        assert_eq!(data.num_envs(), 3);
        assert_eq!(data.feature_dim(), 10);
        let labels: Vec<_> = data.ids().map(|id| id.to_string()).collect();
        assert_eq!(labels, vec!["0.2", "2", "5"]);
        // Y is exactly the X1 sum plus independent noise; X2 carries no Y signal.
        let e = data.get(&EnvironmentId::new("0.2").unwrap()).unwrap();
        for i in 0..e.len() {
            let s: f64 = e.row(i).iter().take(5).sum();
            assert!((e.outcomes()[i] - s).abs() < 2.0);
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        for setting in Setting::ALL {
            let cfg = SemConfig::new(setting, vec![2.0], vec![40], 99).unwrap();
            let a = generate_sem(&cfg).unwrap();
            let b = generate_sem(&SemConfig::new(setting, vec![2.0], vec![40], 99).unwrap()).unwrap();
            assert_eq!(a, b);
            let c = generate_sem(&SemConfig::new(setting, vec![2.0], vec![40], 100).unwrap()).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn fou_x1_variance_matches_scale() {
        let cfg = SemConfig::new(Setting::Fou, vec![2.0], vec![100_000], 5).unwrap();
        let data = generate_sem(&cfg).unwrap();
        let (x, _) = data.pooled();
        for j in 0..5 {
            let v = variance(x.column(j).iter().copied().collect::<Vec<_>>().into_iter());
            assert!((v - 4.0).abs() < 0.1, "coordinate {j}: {v}");
        }
    }

    #[test]
    fn noise_regimes() {
        assert_eq!(Setting::Fou.noise_variances(5.0), (25.0, 1.0));
        assert_eq!(Setting::Feu.noise_variances(5.0), (1.0, 25.0));
        let cfg = SemConfig::new(Setting::Feu, vec![5.0], vec![50_000], 2).unwrap();
        let (x, _) = generate_sem(&cfg).unwrap().pooled();
        let v = variance(x.column(7).iter().copied().collect::<Vec<_>>().into_iter());
        assert!((v - 25.0).abs() < 0.6, "{v}");
    }

    #[test]
    fn partially_observed_weights_redrawn_per_seed() {
        let a = SemConfig::new(Setting::Pou, vec![1.0], vec![5], 1).unwrap();
        let b = SemConfig::new(Setting::Pou, vec![1.0], vec![5], 2).unwrap();
        assert_ne!(a.w_h_to_1, b.w_h_to_1);
        assert!(a.w_y_to_2.iter().any(|v| *v != 0.0));
        let r = a.resample(vec![0.2, 5.0], vec![3, 3], 77).unwrap();
        assert_eq!(r.w_h_to_1, a.w_h_to_1);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SemConfig::new(Setting::Fou, vec![], vec![], 0).is_err());
        assert!(SemConfig::new(Setting::Fou, vec![-1.0], vec![10], 0).is_err());
        assert!(SemConfig::new(Setting::Fou, vec![1.0], vec![10, 10], 0).is_err());
        let mut cfg = SemConfig::new(Setting::Fou, vec![1.0], vec![10], 0).unwrap();
        cfg.w_y_to_2[0] = 1.0;
        assert!(matches!(generate_sem(&cfg), Err(CricError::Config(_))));
        let mut cfg = SemConfig::new(Setting::Pou, vec![1.0], vec![10], 0).unwrap();
        cfg.w_y_to_2 = Array1::zeros(3);
        assert!(generate_sem(&cfg).is_err());
    }

    #[test]
    fn even_sizes_remainder_first() {
        assert_eq!(even_sizes(800, 3), vec![267, 267, 266]);
        assert_eq!(even_sizes(9, 3), vec![3, 3, 3]);
    }
}
