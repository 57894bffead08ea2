use cric::learners::{risk, train, Method, TrainConfig};
use cric::sem::{even_sizes, generate_sem, SemConfig, Setting};
use ndarray::s;

fn sem(setting: Setting, n: usize, seed: u64) -> cric::MultiEnvDataset {
    let scales = vec![0.2, 2.0, 5.0];
    generate_sem(&SemConfig::new(setting, scales, even_sizes(n, 3), seed).unwrap()).unwrap()
}

fn spread(risks: &[f64]) -> f64 {
    let max = risks.iter().cloned().fold(f64::MIN, f64::max);
    let min = risks.iter().cloned().fold(f64::MAX, f64::min);
    (max - min) / max
}

#[test]
fn erm_recovers_causal_weights_on_fully_observed_data() {
    // X2 carries no signal when the structural weights are zero.
    let data = sem(Setting::Fou, 60_000, 1);
    let p = train(Method::Erm, &data, &TrainConfig::default()).unwrap().predictor;
    let coef = p.coefficients();
    for j in 0..5 {
        assert!((coef[j] - 1.0).abs() < 0.05, "x1[{j}] = {}", coef[j]);
        assert!(coef[5 + j].abs() < 0.05, "x2[{j}] = {}", coef[5 + j]);
    }
}

#[test]
fn irmv1_weights_on_x2_shrink() {
    let data = sem(Setting::Fou, 800, 2);
    let p = train(Method::Irmv1, &data, &TrainConfig::default()).unwrap().predictor;
    let coef = p.coefficients();
    let w1 = coef.slice(s![..5]).dot(&coef.slice(s![..5])).sqrt();
    let w2 = coef.slice(s![5..]).dot(&coef.slice(s![5..])).sqrt();
    assert!(w2 / w1 < 0.2, "‖w_X2‖/‖w_X1‖ = {}", w2 / w1);
}

#[test]
fn vrex_equalises_risks_under_heteroskedastic_x2() {
    let data = sem(Setting::Feu, 800, 3);
    let risks = |lambda: f64| -> Vec<f64> {
        let cfg = TrainConfig {
            lambda,
            ..Default::default()
        };
        let p = train(Method::Vrex, &data, &cfg).unwrap().predictor;
        data.iter().map(|(_, e)| risk(&p, e)).collect()
    };
    let penalised = spread(&risks(1e4));
    let plain = spread(&risks(0.0));
    assert!(penalised < 0.5, "relative spread {penalised}");
    assert!(plain > penalised, "{plain} vs {penalised}");
}
