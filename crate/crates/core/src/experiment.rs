//! Synthetic-benchmark runner and file-based evaluation.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{cric, CricOptions, CricReport};
use crate::data::{load_csv, EnvironmentId, MultiEnvDataset};
use crate::error::{CricError, Result};
use crate::learners::{risk, train, Method, Predictor, TrainConfig};
use crate::ratio::{ClassifierConfig, RatioMode, RatioModel};
use crate::rng::{derive_seed, tags};
use crate::sem::{even_sizes, generate_sem, SemConfig, Setting};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfigs {
    pub erm: TrainConfig,
    pub irmv1: TrainConfig,
    pub vrex: TrainConfig,
}

impl Default for MethodConfigs {
    fn default() -> Self {
        Self {
            erm: TrainConfig::default(),
            irmv1: TrainConfig::default(),
            vrex: TrainConfig::default(),
        }
    }
}

impl MethodConfigs {
    pub fn get(&self, m: Method) -> &TrainConfig {
        match m {
            Method::Erm => &self.erm,
            Method::Irmv1 => &self.irmv1,
            Method::Vrex => &self.vrex,
        }
    }

    pub fn get_mut(&mut self, m: Method) -> &mut TrainConfig {
        match m {
            Method::Erm => &mut self.erm,
            Method::Irmv1 => &mut self.irmv1,
            Method::Vrex => &mut self.vrex,
        }
    }
}

/// One benchmark run: a setting, its sample sizes, methods and replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub env_scales: Vec<f64>,
    /// Held-out test environments; `None` draws the test set from the
    /// training environments.
    pub test_env_scales: Option<Vec<f64>>,
    /// Pooled training size, split evenly over environments.
    pub n_train: usize,
    pub n_test: usize,
    pub dim_x1: usize,
    pub dim_x2: usize,
    /// ERM is always trained as the baseline; listing it adds its own rows.
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub train_cfg: MethodConfigs,
    /// Applied to every method, overriding the per-method value. The
    /// structural model is centred, so the default is `false`.
    pub fit_intercept: bool,
    pub ratio_mode: RatioMode,
    pub classifier: ClassifierConfig,
    pub weight_normalized: bool,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setting: Setting::Fou,
            env_scales: vec![0.2, 2.0, 5.0],
            test_env_scales: None,
            n_train: 800,
            n_test: 500,
            dim_x1: 5,
            dim_x2: 5,
            methods: vec![Method::Irmv1, Method::Vrex],
            replicates: 10,
            train_cfg: MethodConfigs::default(),
            fit_intercept: false,
            ratio_mode: RatioMode::Classifier,
            classifier: ClassifierConfig::default(),
            weight_normalized: false,
            base_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CricError::Config(m.to_string()));
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty");
        }
        if self.env_scales.len() < 2 {
            return bad("at least 2 training environments are needed");
        }
        let k_test = self.test_env_scales.as_ref().map_or(self.env_scales.len(), Vec::len);
        if k_test < 2 {
            return bad("at least 2 test environments are needed");
        }
        if self.n_train < 2 * self.env_scales.len() || self.n_test < 2 * k_test {
            return bad("n_train and n_test must give every environment at least 2 samples");
        }
        for m in [Method::Erm, Method::Irmv1, Method::Vrex] {
            self.train_cfg.get(m).validate()?;
        }
        Ok(())
    }

    /// The effective training config of `m`.
    pub fn method_config(&self, m: Method) -> TrainConfig {
        TrainConfig {
            fit_intercept: self.fit_intercept,
            ..*self.train_cfg.get(m)
        }
    }

    fn methods_in_order(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRisk {
    pub env: EnvironmentId,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub setting: Setting,
    pub method: Method,
    pub split: Split,
    pub q_hat: f64,
    pub log10_q_hat: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub risks: Vec<EnvRisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableEntry {
    pub replicate: usize,
    pub method: Method,
    pub split: Split,
    pub e: EnvironmentId,
    pub e_prime: EnvironmentId,
    pub q_cross: f64,
    pub q_self: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub setting: Setting,
    pub rows: Vec<ResultRow>,
    pub q_table: Vec<QTableEntry>,
}

/// The sampling configs of replicate `r`: structural weights from the
/// replicate seed, train and test samples from sub-streams of it.
pub fn replicate_sem(cfg: &ExperimentConfig, replicate: usize) -> Result<(SemConfig, SemConfig)> {
    let rep_seed = derive_seed(cfg.base_seed, &[tags::REPLICATE, replicate as u64]);
    let k = cfg.env_scales.len();
    let base = SemConfig::with_dims(
        cfg.setting,
        cfg.env_scales.clone(),
        even_sizes(cfg.n_train, k),
        cfg.dim_x1,
        cfg.dim_x2,
        rep_seed,
    )?;
    let train = base.resample(
        cfg.env_scales.clone(),
        even_sizes(cfg.n_train, k),
        derive_seed(rep_seed, &[tags::TRAIN]),
    )?;
    let test_scales = cfg.test_env_scales.clone().unwrap_or_else(|| cfg.env_scales.clone());
    let k_test = test_scales.len();
    let test = base.resample(
        test_scales,
        even_sizes(cfg.n_test, k_test),
        derive_seed(rep_seed, &[tags::TEST]),
    )?;
    Ok((train, test))
}

fn annotate(replicate: usize, method: &str) -> impl Fn(CricError) -> CricError + '_ {
    move |e| CricError::InRun {
        replicate,
        method: method.to_string(),
        source: Box::new(e),
    }
}

fn env_risks(p: &Predictor, data: &MultiEnvDataset) -> Vec<EnvRisk> {
    data.iter()
        .map(|(id, env)| EnvRisk {
            env: id.clone(),
            risk: risk(p, env),
        })
        .collect()
}

fn run_replicate(cfg: &ExperimentConfig, r: usize) -> Result<(Vec<ResultRow>, Vec<QTableEntry>)> {
    let (train_sem, test_sem) = replicate_sem(cfg, r).map_err(annotate(r, "data"))?;
    let train_data = generate_sem(&train_sem).map_err(annotate(r, "data"))?;
    let test_data = generate_sem(&test_sem).map_err(annotate(r, "data"))?;

    let baseline = train(Method::Erm, &train_data, &cfg.method_config(Method::Erm))
        .map_err(annotate(r, "erm"))?
        .predictor;
    let methods = cfg.methods_in_order();
    let mut predictors = Vec::with_capacity(methods.len());
    for &m in &methods {
        let p = if m == Method::Erm {
            baseline.clone()
        } else {
            train(m, &train_data, &cfg.method_config(m))
                .map_err(annotate(r, &m.to_string()))?
                .predictor
        };
        predictors.push((m, p));
    }

    let ratio_train =
        RatioModel::fit(&train_data, cfg.ratio_mode, &cfg.classifier).map_err(annotate(r, "ratio"))?;
    let ratio_test =
        RatioModel::fit(&test_data, cfg.ratio_mode, &cfg.classifier).map_err(annotate(r, "ratio"))?;
    let opts = CricOptions {
        weight_normalized: cfg.weight_normalized,
    };

    let mut rows = Vec::new();
    let mut q_table = Vec::new();
    for (m, p) in &predictors {
        for (split, data, ratio) in [
            (Split::Train, &train_data, &ratio_train),
            (Split::Test, &test_data, &ratio_test),
        ] {
            let report: CricReport =
                cric(p, &baseline, ratio, data, opts).map_err(annotate(r, &m.to_string()))?;
            q_table.extend(report.pair_stats_phi.iter().map(|s| QTableEntry {
                replicate: r,
                method: *m,
                split,
                e: s.e.clone(),
                e_prime: s.e_prime.clone(),
                q_cross: s.q_cross,
                q_self: s.q_self,
            }));
            rows.push(ResultRow {
                replicate: r,
                setting: cfg.setting,
                method: *m,
                split,
                q_hat: report.q_hat,
                log10_q_hat: report.log10_q_hat,
                numerator: report.numerator,
                denominator: report.denominator,
                risks: env_risks(p, data),
            });
        }
    }
    Ok((rows, q_table))
}

/// Run every replicate (in parallel) and merge in replicate order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let parts = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut q_table = Vec::new();
    for (rw, q) in parts {
        rows.extend(rw);
        q_table.extend(q);
    }
    Ok(ExperimentResult {
        setting: cfg.setting,
        rows,
        q_table,
    })
}

/// Mean, population standard deviation and median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Some(Self {
            count: values.len(),
            mean,
            std,
            median,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub setting: Setting,
    pub method: Method,
    pub split: Split,
    pub q_hat: Stats,
    /// Over replicates with `Q̂ > 0`.
    pub log10_q_hat: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QCrossSummary {
    pub setting: Setting,
    pub method: Method,
    pub split: Split,
    pub q_cross: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub std: String,
    pub median: String,
    pub q_cross: String,
    pub pairs: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            std: "population standard deviation (divide by count)".into(),
            median: "middle value; mean of the two middle values for even counts".into(),
            q_cross: "cross-pair q statistics pooled over ordered pairs and replicates".into(),
            pairs: "all ordered environment pairs e != e'".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub conventions: Conventions,
    pub groups: Vec<GroupSummary>,
    pub q_cross: Vec<QCrossSummary>,
}

pub fn summarize(result: &ExperimentResult) -> Summary {
    let mut keys: Vec<(Method, Split)> = result.rows.iter().map(|r| (r.method, r.split)).collect();
    keys.sort();
    keys.dedup();
    let mut groups = Vec::new();
    let mut q_cross = Vec::new();
    for (m, s) in keys {
        let rows: Vec<&ResultRow> = result.rows.iter().filter(|r| r.method == m && r.split == s).collect();
        let q: Vec<f64> = rows.iter().map(|r| r.q_hat).collect();
        let lq: Vec<f64> = rows.iter().filter_map(|r| r.log10_q_hat).collect();
        groups.push(GroupSummary {
            setting: result.setting,
            method: m,
            split: s,
            q_hat: Stats::of(&q).expect("group is non-empty"),
            log10_q_hat: Stats::of(&lq),
        });
        let qc: Vec<f64> = result
            .q_table
            .iter()
            .filter(|e| e.method == m && e.split == s)
            .map(|e| e.q_cross)
            .collect();
        if let Some(st) = Stats::of(&qc) {
            q_cross.push(QCrossSummary {
                setting: result.setting,
                method: m,
                split: s,
                q_cross: st,
            });
        }
    }
    Summary {
        conventions: Conventions::default(),
        groups,
        q_cross,
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `results.csv`, `q_table.json` and `summary.json` into `out_dir`.
pub fn emit_results(result: &ExperimentResult, out_dir: impl AsRef<Path>) -> Result<()> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("results.csv"))?;
    w.write_record([
        "replicate",
        "setting",
        "method",
        "split",
        "q_hat",
        "log10_q_hat",
        "numerator",
        "denominator",
        "risks",
    ])?;
    for r in &result.rows {
        let risks = r
            .risks
            .iter()
            .map(|e| format!("{}={}", e.env, e.risk))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.replicate.to_string(),
            r.setting.to_string(),
            r.method.to_string(),
            r.split.to_string(),
            r.q_hat.to_string(),
            format_opt(r.log10_q_hat),
            r.numerator.to_string(),
            r.denominator.to_string(),
            risks,
        ])?;
    }
    w.flush()?;
    fs::write(out.join("q_table.json"), serde_json::to_string_pretty(&result.q_table)? + "\n")?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summarize(result))? + "\n")?;
    Ok(())
}

/// Options for [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub env_column: String,
    pub target_column: String,
    pub ratio_mode: RatioMode,
    pub classifier: ClassifierConfig,
    pub weight_normalized: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            env_column: "env".into(),
            target_column: "y".into(),
            ratio_mode: RatioMode::Classifier,
            classifier: ClassifierConfig::default(),
            weight_normalized: false,
        }
    }
}

pub fn load_predictor(path: impl AsRef<Path>) -> Result<Predictor> {
    let text = fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

/// Fit ratios on a CSV dataset and compute the criterion of a stored
/// predictor against a stored baseline.
pub fn evaluate(
    dataset_path: impl AsRef<Path>,
    predictor_path: impl AsRef<Path>,
    baseline_path: impl AsRef<Path>,
    opts: &EvalOptions,
) -> Result<CricReport> {
    let data = load_csv(dataset_path, &opts.env_column, &opts.target_column)?;
    let p = load_predictor(predictor_path)?;
    let baseline = load_predictor(baseline_path)?;
    p.check_dim(data.feature_dim())?;
    baseline.check_dim(data.feature_dim())?;
    if data.num_envs() < 2 {
        return Err(CricError::Structural(format!(
            "dataset has {} environment; CRIC needs at least 2",
            data.num_envs()
        )));
    }
    let ratio = RatioModel::fit(&data, opts.ratio_mode, &opts.classifier)?;
    cric(
        &p,
        &baseline,
        &ratio,
        &data,
        CricOptions {
            weight_normalized: opts.weight_normalized,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_population_convention() {
        let s = Stats::of(&[-1.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.median, 0.0);
        assert_eq!(Stats::of(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.replicates = 0;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            methods: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            n_train: 5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"setting":"POU","replicates":3}"#).unwrap();
        assert_eq!(cfg.setting, Setting::Pou);
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.env_scales, vec![0.2, 2.0, 5.0]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn replicate_seeds_do_not_depend_on_order() {
        let cfg = ExperimentConfig::default();
        let (a, _) = replicate_sem(&cfg, 3).unwrap();
        let _ = replicate_sem(&cfg, 1).unwrap();
        let (b, _) = replicate_sem(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let (c, _) = replicate_sem(&cfg, 4).unwrap();
        assert_ne!(a.seed, c.seed);
    }
}
