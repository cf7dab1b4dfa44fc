//! Browser bindings. Every entry point takes a JSON model
//! (`{"rate": ..., "joint": ..., "g": ...}`, the same objects as the CLI's
//! `[model]` table) and returns a JSON string.

use serde::{Deserialize, Serialize};
use serde_json::json;
use tvqueue::bounds::stability_for;
use tvqueue::coupling::compare_paths;
use tvqueue::model::validate_spec;
use tvqueue::sim::{run_busy_period, run_horizon};
use tvqueue::stats::test_st_dominance;
use tvqueue::streams::map_replications;
use tvqueue::{CostFunction, Discipline, Init, JointLaw, QueueSpec, RateFunction, ReplicationKey, RunKind, SimOptions, ValidSpec};
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Model {
    rate: RateFunction,
    joint: JointLaw,
    #[serde(default = "CostFunction::one")]
    g: CostFunction,
}

fn parse(model: &str) -> Result<Model, String> {
    serde_json::from_str(model).map_err(|e| format!("model: {e}"))
}

fn spec(m: &Model, init: Init, run: RunKind) -> Result<ValidSpec, String> {
    validate_spec(QueueSpec::new(m.rate.clone(), m.joint.clone(), Discipline::Fcfs, init), run).map_err(|e| e.to_string())
}

fn to_json(v: impl Serialize) -> Result<String, String> {
    serde_json::to_string(&v).map_err(|e| e.to_string())
}

/// Workload of the `lambda`-queue and the `lambda_h`-queue on shared
/// candidates over `[0, horizon]`, sampled at `points` times, plus the first
/// time the lower path exceeds the upper one.
pub fn coupled_paths_json(model: &str, horizon: f64, points: usize, seed: u64) -> Result<String, String> {
    let m = parse(model)?;
    let lo_spec = spec(&m, Init::Empty, RunKind::Horizon)?;
    let hi_spec = lo_spec.dominating();
    let key = ReplicationKey::new(seed, 0);
    let one = CostFunction::one();
    let lo = run_horizon(&lo_spec, horizon, &one, key, SimOptions::recording()).map_err(|e| e.to_string())?;
    let hi = run_horizon(&hi_spec, horizon, &one, key, SimOptions::recording()).map_err(|e| e.to_string())?;
    let n = points.max(2);
    let times: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
    let sample = |p: &tvqueue::sim::WorkloadPath| times.iter().map(|&t| p.workload_at(t)).collect::<Vec<_>>();
    let cmp = compare_paths(&lo.path, &hi.path);
    to_json(json!({
        "t": times,
        "lower": sample(&lo.path),
        "upper": sample(&hi.path),
        "lower_joins": lo.path.join_times().count(),
        "upper_joins": hi.path.join_times().count(),
        "first_violation": cmp.first_violation,
    }))
}

/// Busy-period functionals `A` from workload 1 for both queues, sorted for
/// an empirical-CDF plot, with the one-sided dominance test at `alpha`.
pub fn busy_period_cdfs_json(model: &str, reps: u64, seed: u64, alpha: f64) -> Result<String, String> {
    let m = parse(model)?;
    let lo_spec = spec(&m, Init::Workload { x: 1.0 }, RunKind::BusyPeriod)?;
    let hi_spec = lo_spec.dominating();
    let draw = |s: &ValidSpec, salt: u64| -> Result<Vec<f64>, String> {
        let mut v = map_replications(reps, Some(1), |r| {
            run_busy_period(s, &m.g, ReplicationKey::new(seed, r).fork(salt), SimOptions::default()).map(|x| x.1.a)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let lower = draw(&lo_spec, 1)?;
    let upper = draw(&hi_spec, 2)?;
    let verdict = test_st_dominance(&lower, &upper, alpha).map_err(|e| e.to_string())?;
    to_json(json!({
        "lower": lower,
        "upper": upper,
        "d_plus": verdict.statistic,
        "critical": verdict.critical,
        "method": verdict.method,
        "consistent": verdict.consistent(),
    }))
}

/// Load of the dominating homogeneous queue and the stability verdict.
pub fn stability_json(model: &str) -> Result<String, String> {
    let m = parse(model)?;
    let s = spec(&m, Init::Empty, RunKind::Horizon)?;
    let report = stability_for(s.rate.lambda_h, &s.joint).map_err(|e| e.to_string())?;
    to_json(report)
}

#[wasm_bindgen]
pub fn coupled_paths(model: &str, horizon: f64, points: u32, seed: u32) -> Result<String, JsError> {
    coupled_paths_json(model, horizon, points as usize, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn busy_period_cdfs(model: &str, reps: u32, seed: u32, alpha: f64) -> Result<String, JsError> {
    busy_period_cdfs_json(model, u64::from(reps), u64::from(seed), alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stability(model: &str) -> Result<String, JsError> {
    stability_json(model).map_err(|e| JsError::new(&e))
}
