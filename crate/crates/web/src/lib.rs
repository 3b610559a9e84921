//! wasm-bindgen bindings behind the static demo page in `www/`.
//!
//! Every exported function takes a JSON parameter object and returns a JSON
//! string. The `*_json` twins hold the logic and are what native tests call.

use addow::addow::{addow_with_profile, min_cost_profile, CostVector};
use addow::estimation::{storey_estimate, DEFAULT_LAMBDA};
use addow::harness::{run_scenario, MuRule, RunOptions, ScenarioConfig, SweepPoint};
use addow::model::MetricSample;
use addow::oracle::{expected_power, oracle_weight_function, GaussianModel};
use addow::stepup::{bh, grid_point, wbh_counts, StepUpOutcome, WeightVector};
use addow::{GroupedPValues, NullEstimates};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Most points sent back for a curve.
const MAX_CURVE_POINTS: usize = 400;
/// Caps that keep a single call interactive in the browser.
const MAX_M: usize = 20_000;
const MAX_ORACLE_M: usize = 2_000;
const MAX_REPLICATIONS: usize = 2_000;

#[derive(Debug, Deserialize)]
struct Params {
    mu: Vec<f64>,
    group_sizes: Vec<usize>,
    null_fractions: Vec<f64>,
    alpha: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_replications")]
    replications: usize,
}

fn default_replications() -> usize {
    100
}

impl Params {
    fn parse(text: &str) -> Result<Self, String> {
        let p: Params = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let g = p.mu.len();
        if g == 0 || p.group_sizes.len() != g || p.null_fractions.len() != g {
            return Err("mu, group_sizes and null_fractions need one entry per group".into());
        }
        if p.null_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err("null fractions must lie in [0, 1]".into());
        }
        if p.group_sizes.iter().sum::<usize>() > MAX_M {
            return Err(format!("at most {MAX_M} hypotheses in the demo"));
        }
        Ok(p)
    }

    fn model(&self) -> Result<GaussianModel, String> {
        let nulls = self
            .group_sizes
            .iter()
            .zip(&self.null_fractions)
            .map(|(&s, f)| (f * s as f64).round() as usize)
            .collect();
        GaussianModel::new(self.mu.clone(), self.group_sizes.clone(), nulls).map_err(|e| e.to_string())
    }
}

fn curve_indices(m: usize) -> impl Iterator<Item = usize> {
    let step = m.div_ceil(MAX_CURVE_POINTS).max(1);
    (1..=m).filter(move |k| k % step == 0 || *k == m)
}

fn summary(name: &str, outcome: &StepUpOutcome, data: &GroupedPValues) -> Result<Value, String> {
    let metrics = MetricSample::evaluate(&outcome.rejections, data).map_err(|e| e.to_string())?;
    Ok(json!({
        "name": name,
        "u_hat": outcome.u_hat,
        "k_hat": outcome.k_hat,
        "weights": outcome.weights.as_slice(),
        "rejections": metrics.rejections,
        "fdp": metrics.fdp,
        "power": metrics.power,
    }))
}

/// Draws one dataset and returns the counting curves `G(u)` of BH and of the
/// optimally weighted procedures, plus each procedure's decision.
pub fn analyze_json(params: &str) -> Result<String, String> {
    let p = Params::parse(params)?;
    if !(p.alpha > 0.0 && p.alpha < 1.0) {
        return Err("alpha must lie in (0, 1)".into());
    }
    let model = p.model()?;
    let data = model.generate_seeded(p.seed);
    let m = data.m();
    let err = |e: addow::Error| e.to_string();

    let ne = min_cost_profile(&data, &CostVector::non_estimated(&data));
    let storey = storey_estimate(&data, DEFAULT_LAMBDA).map_err(err)?;
    let st = min_cost_profile(&data, &CostVector::from_estimates(&data, &storey));
    let truth = NullEstimates::oracle(&data, model.null_fractions()).map_err(err)?;
    let ce = min_cost_profile(&data, &CostVector::from_estimates(&data, &truth));

    let bh_counts = wbh_counts(&data, &WeightVector::ones(data.num_groups()), p.alpha);
    let curves = [
        ("bh", bh_counts),
        ("ihw", ne.optimal_counts(p.alpha)),
        ("addow", st.optimal_counts(p.alpha)),
        ("addow_ce", ce.optimal_counts(p.alpha)),
    ];
    let ks: Vec<usize> = curve_indices(m).collect();
    let mut curve_doc = serde_json::Map::new();
    curve_doc.insert("u".into(), json!(ks.iter().map(|&k| grid_point(k, m)).collect::<Vec<_>>()));
    for (name, counts) in &curves {
        let values: Vec<f64> = ks.iter().map(|&k| grid_point(counts[k], m)).collect();
        curve_doc.insert((*name).into(), json!(values));
    }

    let procedures = vec![
        summary("BH", &bh(&data, p.alpha), &data)?,
        summary("IHW", &addow_with_profile(&data, &ne, p.alpha), &data)?,
        summary("ADDOW (Storey)", &addow_with_profile(&data, &st, p.alpha), &data)?,
        summary("ADDOW (true pi0)", &addow_with_profile(&data, &ce, p.alpha), &data)?,
    ];
    Ok(json!({
        "m": m,
        "alpha": p.alpha,
        "pi0_storey": storey.pi0(),
        "pi0_true": model.null_fractions(),
        "curves": curve_doc,
        "procedures": procedures,
    })
    .to_string())
}

/// Oracle weight function on the grid `u = k/m` for both budget choices,
/// with the expected power it attains and the critical level.
pub fn oracle_json(params: &str) -> Result<String, String> {
    let p = Params::parse(params)?;
    let model = p.model()?;
    if model.m() > MAX_ORACLE_M {
        return Err(format!("at most {MAX_ORACLE_M} hypotheses for the oracle curve"));
    }
    let err = |e: addow::Error| e.to_string();
    let m = model.m();
    let ks: Vec<usize> = curve_indices(m).collect();
    let mut doc = serde_json::Map::new();
    doc.insert("u".into(), json!(ks.iter().map(|&k| grid_point(k, m)).collect::<Vec<_>>()));
    for (name, costs, pibar) in [
        ("ne", model.non_estimated_costs(), vec![1.0; model.num_groups()]),
        ("ce", model.consistent_costs(), model.null_fractions()),
    ] {
        let function = oracle_weight_function(&model, &costs, p.alpha).map_err(err)?;
        let weights: Vec<&[f64]> = ks.iter().map(|&k| function.at(k).as_slice()).collect();
        let power: Vec<f64> = ks
            .iter()
            .map(|&k| expected_power(&model, function.at(k), p.alpha, grid_point(k, m)))
            .collect();
        doc.insert(
            name.into(),
            json!({
                "costs": costs.as_slice(),
                "weights": weights,
                "power": power,
                "critical_alpha": model.critical_alpha(&pibar).map_err(err)?,
            }),
        );
    }
    Ok(Value::Object(doc).to_string())
}

/// Small paired Monte Carlo at one model: FDR and power of BH, IHW, ADDOW
/// and the oracle procedure.
pub fn monte_carlo_json(params: &str) -> Result<String, String> {
    let p = Params::parse(params)?;
    if p.replications == 0 || p.replications > MAX_REPLICATIONS {
        return Err(format!("replications must lie in 1..={MAX_REPLICATIONS}"));
    }
    let m: usize = p.group_sizes.iter().sum();
    let config = ScenarioConfig {
        name: "demo".into(),
        mu_rule: p.mu.iter().map(|&offset| MuRule { offset, scale: 0.0 }).collect(),
        size_fractions: p.group_sizes.iter().map(|&s| s as f64 / m as f64).collect(),
        null_fractions: p.null_fractions.clone(),
        sweep: vec![SweepPoint { mu_bar: 0.0, m }],
        alpha: p.alpha,
        beta: None,
        procedures: ["bh", "ihw", "abh:storey", "addow:storey", "addow:ce", "oracle-mwbh:ce"]
            .iter()
            .map(|s| s.parse().expect("known procedure"))
            .collect(),
        replications: p.replications,
        quantile_replicates: 1,
        seed: p.seed,
    };
    let report = run_scenario(&config, &RunOptions::default()).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

fn to_js(result: Result<String, String>) -> Result<String, JsValue> {
    result.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn analyze(params: &str) -> Result<String, JsValue> {
    to_js(analyze_json(params))
}

#[wasm_bindgen]
pub fn oracle(params: &str) -> Result<String, JsValue> {
    to_js(oracle_json(params))
}

#[wasm_bindgen]
pub fn monte_carlo(params: &str) -> Result<String, JsValue> {
    to_js(monte_carlo_json(params))
}
