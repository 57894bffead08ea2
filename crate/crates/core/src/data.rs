//! Multi-environment datasets and CSV ingestion.

use std::fmt;
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CricError, Result};
use crate::rng::{self, tags};

/// Opaque environment label, e.g. `"0.2"` or `"2014"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvironmentId(String);

impl EnvironmentId {
    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(CricError::Data("environment label must be non-empty".into()));
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EnvironmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Samples `(x_i, y_i)` drawn from one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDataset {
    covariates: Array2<f64>,
    outcomes: Array1<f64>,
}

impl EnvDataset {
    /// Requires at least two rows, matching lengths and finite entries.
    pub fn new(covariates: Array2<f64>, outcomes: Array1<f64>) -> Result<Self> {
        if covariates.nrows() != outcomes.len() {
            return Err(CricError::Data(format!(
                "covariate rows ({}) do not match outcome length ({})",
                covariates.nrows(),
                outcomes.len()
            )));
        }
        if outcomes.len() < 2 {
            return Err(CricError::Size(format!(
                "an environment needs at least 2 samples, got {}",
                outcomes.len()
            )));
        }
        if !covariates.iter().chain(outcomes.iter()).all(|v| v.is_finite()) {
            return Err(CricError::Data("non-finite value in environment data".into()));
        }
        Ok(Self {
            covariates,
            outcomes,
        })
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn outcomes(&self) -> &Array1<f64> {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.covariates.row(i)
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.covariates.select(Axis(0), indices),
            self.outcomes.select(Axis(0), indices),
        )
    }
}

/// Datasets from several environments sharing one feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiEnvDataset {
    environments: Vec<(EnvironmentId, EnvDataset)>,
    feature_names: Vec<String>,
}

impl MultiEnvDataset {
    /// Environment order is preserved as given.
    pub fn new(
        environments: Vec<(EnvironmentId, EnvDataset)>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if environments.is_empty() {
            return Err(CricError::Data("dataset has no environments".into()));
        }
        let d = feature_names.len();
        if d == 0 {
            return Err(CricError::Data("dataset has no feature columns".into()));
        }
        for (i, (id, env)) in environments.iter().enumerate() {
            if env.dim() != d {
                return Err(CricError::Data(format!(
                    "environment '{id}' has {} columns, expected {d}",
                    env.dim()
                )));
            }
            if environments[..i].iter().any(|(other, _)| other == id) {
                return Err(CricError::Data(format!("duplicate environment '{id}'")));
            }
        }
        Ok(Self {
            environments,
            feature_names,
        })
    }

    /// Feature names default to `x0..x{d-1}`.
    pub fn with_default_names(environments: Vec<(EnvironmentId, EnvDataset)>) -> Result<Self> {
        let d = environments.first().map(|(_, e)| e.dim()).unwrap_or(0);
        Self::new(environments, default_feature_names(d))
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_envs(&self) -> usize {
        self.environments.len()
    }

    pub fn total_len(&self) -> usize {
        self.environments.iter().map(|(_, e)| e.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = &EnvironmentId> {
        self.environments.iter().map(|(id, _)| id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EnvironmentId, &EnvDataset)> {
        self.environments.iter().map(|(id, e)| (id, e))
    }

    pub fn get(&self, id: &EnvironmentId) -> Result<&EnvDataset> {
        self.environments
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, e)| e)
            .ok_or_else(|| CricError::Lookup(format!("environment '{id}'")))
    }

    pub fn position(&self, id: &EnvironmentId) -> Option<usize> {
        self.environments.iter().position(|(k, _)| k == id)
    }

    /// All environments stacked in order.
    pub fn pooled(&self) -> (Array2<f64>, Array1<f64>) {
        let xs: Vec<_> = self.environments.iter().map(|(_, e)| e.covariates.view()).collect();
        let ys: Vec<_> = self.environments.iter().map(|(_, e)| e.outcomes.view()).collect();
        (
            concatenate(Axis(0), &xs).expect("feature dims checked at construction"),
            concatenate(Axis(0), &ys).expect("vectors always concatenate"),
        )
    }

    /// Same data under new labels (in environment order).
    pub fn relabel(&self, labels: Vec<EnvironmentId>) -> Result<Self> {
        if labels.len() != self.num_envs() {
            return Err(CricError::Data("relabel needs one label per environment".into()));
        }
        let envs = labels
            .into_iter()
            .zip(self.environments.iter().map(|(_, e)| e.clone()))
            .collect();
        Self::new(envs, self.feature_names.clone())
    }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Read a dataset CSV: header row, one environment column, one target
/// column, every other column a real-valued feature (in header order).
pub fn load_csv(
    path: impl AsRef<Path>,
    env_column: &str,
    target_column: &str,
) -> Result<MultiEnvDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CricError::Data(format!("missing column '{name}'")))
    };
    let env_idx = find(env_column)?;
    let target_idx = find(target_column)?;
    if env_idx == target_idx {
        return Err(CricError::Data("environment and target column are the same".into()));
    }
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&j| j != env_idx && j != target_idx)
        .collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&j| header[j].to_string()).collect();

    // (label, flat covariates, outcomes), in order of first appearance.
    let mut groups: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(CricError::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let parse = |j: usize| -> Result<f64> {
            let cell = &record[j];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CricError::Parse {
                    row: line,
                    column: header[j].to_string(),
                    message: format!("'{cell}' is not a finite number"),
                }),
            }
        };
        let label = &record[env_idx];
        if label.is_empty() {
            return Err(CricError::Parse {
                row: line,
                column: env_column.to_string(),
                message: "empty environment label".into(),
            });
        }
        let y = parse(target_idx)?;
        let pos = match groups.iter().position(|(l, _, _)| l == label) {
            Some(p) => p,
            None => {
                groups.push((label.to_string(), Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        for &j in &feature_idx {
            let v = parse(j)?;
            groups[pos].1.push(v);
        }
        groups[pos].2.push(y);
    }

    let d = feature_idx.len();
    let mut envs = Vec::with_capacity(groups.len());
    for (label, flat, ys) in groups {
        if ys.len() < 2 {
            return Err(CricError::Data(format!(
                "environment '{label}' has {} row(s); at least 2 are required",
                ys.len()
            )));
        }
        let x = Array2::from_shape_vec((ys.len(), d), flat)
            .map_err(|e| CricError::Data(e.to_string()))?;
        envs.push((EnvironmentId::new(label)?, EnvDataset::new(x, Array1::from(ys))?));
    }
    MultiEnvDataset::new(envs, feature_names)
}

/// Write `data` in the same CSV layout `load_csv` reads: environment
/// column first, then target, then features.
pub fn write_csv(
    data: &MultiEnvDataset,
    path: impl AsRef<Path>,
    env_column: &str,
    target_column: &str,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec![env_column.to_string(), target_column.to_string()];
    header.extend(data.feature_names.iter().cloned());
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (id, env) in data.iter() {
        for i in 0..env.len() {
            record.clear();
            record.push(id.to_string());
            record.push(env.outcomes[i].to_string());
            record.extend(env.row(i).iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Shuffle each environment with its own seeded stream and cut it into
/// `floor(n_e * train_fraction)` training rows and the remainder.
pub fn split_per_env(
    data: &MultiEnvDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(MultiEnvDataset, MultiEnvDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CricError::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut train = Vec::with_capacity(data.num_envs());
    let mut test = Vec::with_capacity(data.num_envs());
    for (k, (id, env)) in data.iter().enumerate() {
        let n = env.len();
        let n_train = (n as f64 * train_fraction).floor() as usize;
        if n_train < 2 || n - n_train < 2 {
            return Err(CricError::Size(format!(
                "splitting environment '{id}' ({n} rows) at {train_fraction} leaves {n_train}/{} rows; both sides need at least 2",
                n - n_train
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, &[tags::SPLIT, k as u64]));
        train.push((id.clone(), env.select(&idx[..n_train])?));
        test.push((id.clone(), env.select(&idx[n_train..])?));
    }
    Ok((
        MultiEnvDataset::new(train, data.feature_names.clone())?,
        MultiEnvDataset::new(test, data.feature_names.clone())?,
    ))
}
