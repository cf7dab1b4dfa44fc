//! The eight subcommands. Each returns a [`Report`]; files go through
//! [`Artifacts`] so the manifest indexes all of them.

use crate::config::{ConfigError, ExperimentConfig, Suite};
use crate::output::{Artifacts, CapIncident};
use serde::Serialize;
use serde_json::{json, Value};
use tvqueue::bounds::{
    bound_result, decompound_cdf, eta_moment_report, mg1_oracles, sample_prop_bound, stability_for, step_lookup,
    tail_ratio, TailSetup, TailTarget,
};
use tvqueue::coupling::{paired_functional_batch, BatchConfig, BatchKind, PairedBatch};
use tvqueue::model::validate_spec;
use tvqueue::sim::{run_busy_period, run_cycle, run_horizon, run_until_long_idle, EventRecord};
use tvqueue::stats::{
    mean_estimate, ratio_estimate, test_st_dominance, test_st_dominance_cdf, test_st_dominance_permutation,
    DominanceVerdict, EmpiricalDistribution, PERMUTATION_THRESHOLD,
};
use tvqueue::streams::map_replications;
use tvqueue::{
    CostFunction, Discipline, FunctionalSample, Init, Lane, Marginal, QueueSpec, RateFunction, ReplicationKey, Room,
    RunKind, SimError, SimOptions, ValidSpec, WorkloadPath,
};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

fn invalid(m: impl Into<String>) -> CommandError {
    CommandError::Config(ConfigError::Invalid(m.into()))
}

fn failed(e: impl std::fmt::Display) -> CommandError {
    CommandError::Failed(e.to_string())
}

#[derive(Debug, Default)]
pub struct Report {
    pub summary: Value,
    pub incidents: Vec<CapIncident>,
    /// Some dominance verdict was a rejection.
    pub rejected: bool,
    /// Some oracle of `validate` failed.
    pub failed_checks: bool,
}

#[derive(Serialize)]
struct SampleRow {
    rep: u64,
    duration: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "A_star")]
    a_star: f64,
    eta_star: u64,
    balk_patience: u64,
    balk_room: u64,
}

impl SampleRow {
    fn new(rep: u64, s: &FunctionalSample) -> Self {
        SampleRow {
            rep,
            duration: s.duration,
            a: s.a,
            a_star: s.a_star,
            eta_star: s.eta_star,
            balk_patience: s.balked_patience,
            balk_room: s.balked_room,
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    time: f64,
    kind: &'static str,
    #[serde(rename = "W_pre")]
    w_pre: f64,
    jump: f64,
    #[serde(rename = "L_pre")]
    l_pre: usize,
}

impl From<&EventRecord> for TraceRow {
    fn from(e: &EventRecord) -> Self {
        TraceRow { time: e.time, kind: e.kind.as_str(), w_pre: e.w_pre, jump: e.jump, l_pre: e.l_pre }
    }
}

#[derive(Serialize)]
struct PairedRow<'a> {
    rep: u64,
    arm: &'a str,
    duration: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "A_star")]
    a_star: f64,
    eta_star: u64,
    dominance_flag: &'static str,
}

#[derive(Serialize)]
struct BoundRow {
    u: f64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "J_star")]
    j_star: f64,
    prop2_cdf: f64,
}

#[derive(Serialize)]
struct TailCsvRow {
    target: &'static str,
    level: f64,
    u: f64,
    survival: f64,
    reference: f64,
    ratio: f64,
    bound: f64,
}

fn key(cfg: &ExperimentConfig, r: u64) -> ReplicationKey {
    ReplicationKey::new(cfg.run.seed, r)
}

fn opts(cfg: &ExperimentConfig) -> SimOptions {
    SimOptions { caps: cfg.run.caps, record: false }
}

fn validated(spec: QueueSpec, run: RunKind) -> Result<ValidSpec, CommandError> {
    validate_spec(spec, run).map_err(|e| invalid(e.to_string()))
}

fn describe(values: &[f64]) -> Value {
    let e = mean_estimate(values);
    json!({ "mean": e.mean, "se": e.se, "n": values.len() })
}

fn run_one(
    spec: &QueueSpec,
    g: &CostFunction,
    run: RunKind,
    horizon: Option<f64>,
    k: ReplicationKey,
    o: SimOptions,
) -> Result<(WorkloadPath, FunctionalSample), SimError> {
    match run {
        RunKind::BusyPeriod => run_busy_period(spec, g, k, o),
        RunKind::Cycle => run_cycle(spec, g, k, o),
        RunKind::Horizon => run_horizon(spec, horizon.unwrap_or(f64::NAN), g, k, o).map(|h| (h.path, h.sample)),
    }
}

/// Default run kind: cycles from an empty start, busy periods otherwise.
pub fn simulate_kind(cfg: &ExperimentConfig) -> RunKind {
    cfg.run.kind.unwrap_or(match cfg.model.init {
        Some(Init::Empty) => RunKind::Cycle,
        _ => RunKind::BusyPeriod,
    })
}

type Completed = Vec<(u64, WorkloadPath, FunctionalSample)>;

/// Functionals of the completed cycles, their replication ids, and cap hits.
type CycleRun = (Vec<FunctionalSample>, Vec<u64>, Vec<CapIncident>);

/// Replications of one run kind; failures are split into cap incidents and
/// hard errors.
fn replicate(
    cfg: &ExperimentConfig,
    spec: &ValidSpec,
    run: RunKind,
    o: SimOptions,
) -> Result<(Completed, Vec<CapIncident>), CommandError> {
    let g = &cfg.model.g;
    let results = map_replications(cfg.run.reps, cfg.run.threads, |r| run_one(spec, g, run, cfg.run.horizon, key(cfg, r), o));
    let mut done = Vec::with_capacity(results.len());
    let mut incidents = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok((p, s)) => done.push((r as u64, p, s)),
            Err(e) if e.is_cap() => incidents.push(CapIncident { replication: r as u64, arm: None, message: e.to_string() }),
            Err(e) => return Err(failed(format!("replication {r}: {e}"))),
        }
    }
    Ok((done, incidents))
}

fn summarize_samples(rows: &[(u64, WorkloadPath, FunctionalSample)]) -> Value {
    let col = |f: fn(&FunctionalSample) -> f64| rows.iter().map(|r| f(&r.2)).collect::<Vec<_>>();
    if rows.is_empty() {
        return json!(null);
    }
    json!({
        "duration": describe(&col(|s| s.duration)),
        "A": describe(&col(|s| s.a)),
        "A_star": describe(&col(|s| s.a_star)),
        "eta_star": describe(&col(|s| s.eta_star as f64)),
        "balk_patience": describe(&col(|s| s.balked_patience as f64)),
        "balk_room": describe(&col(|s| s.balked_room as f64)),
    })
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let run = simulate_kind(cfg);
    if run == RunKind::Horizon && cfg.run.horizon.is_none() {
        return Err(invalid("horizon runs need run.horizon"));
    }
    let spec = validated(cfg.queue_spec(), run)?;
    let o = SimOptions { record: cfg.output.trace, ..opts(cfg) };
    let (rows, incidents) = replicate(cfg, &spec, run, o)?;
    out.csv("samples.csv", "samples", rows.iter().map(|(r, _, s)| SampleRow::new(*r, s)))?;
    if cfg.output.trace {
        let width = (cfg.run.reps.max(1) - 1).to_string().len();
        for (r, path, _) in &rows {
            out.csv(&format!("trace/rep_{r:0width$}.csv"), "trace", path.events.iter().map(TraceRow::from))?;
        }
    }
    let summary = json!({
        "subcommand": "simulate",
        "run_kind": run,
        "spec": spec.to_string(),
        "cost": cfg.model.g.to_string(),
        "reps": cfg.run.reps,
        "completed": rows.len(),
        "cap_incidents": incidents.len(),
        "estimates": summarize_samples(&rows),
    });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, ..Default::default() })
}

// ---------------------------------------------------------------------------
// dominance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct Comparison {
    group: String,
    lower: String,
    upper: String,
    functional: &'static str,
    label: &'static str,
    #[serde(flatten)]
    verdict: DominanceVerdict,
}

/// Asymptotic test, or the permutation version for small arms.
pub fn dominance_test(lower: &[f64], upper: &[f64], alpha: f64, seed: u64) -> Result<DominanceVerdict, CommandError> {
    let v = if lower.len().min(upper.len()) < PERMUTATION_THRESHOLD {
        test_st_dominance_permutation(lower, upper, alpha, 999, seed)
    } else {
        test_st_dominance(lower, upper, alpha)
    };
    v.map_err(failed)
}

struct Group {
    name: String,
    batch: PairedBatch,
    pairs: Vec<(usize, usize)>,
}

fn read_column(path: &std::path::Path, column: &str) -> Result<Vec<f64>, CommandError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| invalid(format!("{}: {e}", path.display())))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| invalid(format!("{}: no column {column:?}", path.display())))?;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let v: f64 = rec[idx].parse().map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(invalid(format!("{}: no rows", path.display())));
    }
    Ok(values)
}

fn conjecture_arms(cfg: &ExperimentConfig, spec: &ValidSpec, run: RunKind) -> Result<BatchKind, CommandError> {
    let upper: RateFunction = cfg.run.upper_rate.clone().ok_or_else(|| invalid("the conjecture suite needs run.upper_rate"))?;
    let lower = &cfg.model.rate;
    if upper.lambda_h != lower.lambda_h {
        return Err(invalid("conjecture arms must share lambda_h so both thin the same candidates"));
    }
    let span = lower.kappa.or(upper.kappa).unwrap_or(100.0);
    for i in 0..=10_000 {
        let t = span * i as f64 / 10_000.0;
        let (a, b) = (lower.eval(t).map_err(failed)?, upper.eval(t).map_err(failed)?);
        if a > b + 4.0 * f64::EPSILON * b.abs() {
            return Err(invalid(format!("run.upper_rate lies below model.rate at t = {t}")));
        }
    }
    let hi = validated(spec.spec().clone().with_rate(upper), run)?;
    Ok(BatchKind::Custom(vec![("lambda_1".into(), spec.clone()), ("lambda_2".into(), hi)]))
}

pub fn dominance(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let alpha = cfg.run.alpha;
    if cfg.run.suite == Suite::Files {
        let files = cfg.run.files.as_ref().ok_or_else(|| invalid("the files suite needs run.files"))?;
        let lower = read_column(&files.lower, &files.column)?;
        let upper = read_column(&files.upper, &files.column)?;
        let verdict = dominance_test(&lower, &upper, alpha, cfg.run.seed)?;
        let rejected = !verdict.consistent();
        let summary = json!({
            "subcommand": "dominance",
            "suite": "files",
            "comparisons": [{
                "lower": files.lower.display().to_string(),
                "upper": files.upper.display().to_string(),
                "functional": files.column,
                "label": "sample files",
                "verdict": verdict,
            }],
            "rejected": rejected,
        });
        out.json("summary.json", "summary", &summary)?;
        return Ok(Report { summary, rejected, ..Default::default() });
    }

    let run = match cfg.run.kind.unwrap_or_else(|| simulate_kind(cfg)) {
        RunKind::Horizon => return Err(invalid("dominance suites use busy periods or cycles")),
        k => k,
    };
    let spec = validated(cfg.queue_spec(), run)?;
    let g = &cfg.model.g;
    let batch = |kind: &BatchKind, spec: &ValidSpec| {
        let bc = BatchConfig {
            spec,
            g,
            run,
            pairing: cfg.run.pairing,
            reps: cfg.run.reps,
            seed: cfg.run.seed,
            threads: cfg.run.threads,
            opts: opts(cfg),
        };
        paired_functional_batch(kind, &bc).map_err(|e| invalid(e.to_string()))
    };

    let mut groups = Vec::new();
    let label = if cfg.run.suite == Suite::Conjecture { "conjecture evidence" } else { "theorem check" };
    match cfg.run.suite {
        Suite::Rates => groups.push(Group { name: "rates".into(), batch: batch(&BatchKind::Rates, &spec)?, pairs: vec![(0, 1)] }),
        Suite::AllJoin => groups.push(Group { name: "all-join".into(), batch: batch(&BatchKind::AllJoin, &spec)?, pairs: vec![(0, 1)] }),
        Suite::Conjecture => {
            let kind = conjecture_arms(cfg, &spec, run)?;
            groups.push(Group { name: "conjecture".into(), batch: batch(&kind, &spec)?, pairs: vec![(0, 1)] });
        }
        Suite::Rooms => {
            let ks = &cfg.run.ks;
            if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("run.ks must be strictly ascending"));
            }
            let ladder = batch(&BatchKind::Rooms(ks.clone()), &spec)?;
            groups.push(Group { name: "rooms".into(), pairs: (1..ks.len()).map(|i| (i - 1, i)).collect(), batch: ladder });
            for &k in ks.iter().filter(|k| **k != Room::Infinite) {
                let member = spec.with_discipline(Discipline::LcfsPr { room: k });
                groups.push(Group { name: format!("rates k={k}"), batch: batch(&BatchKind::Rates, &member)?, pairs: vec![(0, 1)] });
            }
        }
        Suite::Files => unreachable!(),
    }

    let mut comparisons = Vec::new();
    let mut incidents = Vec::new();
    let mut rows = Vec::new();
    for grp in &groups {
        let b = &grp.batch;
        for (id, message) in &b.errored {
            if message.contains("cap exceeded") {
                incidents.push(CapIncident { replication: *id, arm: Some(grp.name.clone()), message: message.clone() });
            } else {
                return Err(failed(format!("replication {id}: {message}")));
            }
        }
        for &(lo, hi) in &grp.pairs {
            for (functional, f) in [("A", (|s: &FunctionalSample| s.a) as fn(&FunctionalSample) -> f64), ("A_star", |s| s.a_star)] {
                let verdict = dominance_test(&b.arms[lo].column(f), &b.arms[hi].column(f), alpha, cfg.run.seed)?;
                comparisons.push(Comparison {
                    group: grp.name.clone(),
                    lower: b.arms[lo].label.clone(),
                    upper: b.arms[hi].label.clone(),
                    functional,
                    label,
                    verdict,
                });
            }
        }
        for arm in &b.arms {
            let name = if groups.len() > 1 { format!("{}:{}", grp.name, arm.label) } else { arm.label.clone() };
            for ((id, s), flag) in b.ids.iter().zip(&arm.samples).zip(&b.dominance_flags) {
                rows.push((*id, name.clone(), *s, flag.as_str()));
            }
        }
    }
    out.csv(
        "paired.csv",
        "paired",
        rows.iter().map(|(rep, arm, s, flag)| PairedRow {
            rep: *rep,
            arm,
            duration: s.duration,
            a: s.a,
            a_star: s.a_star,
            eta_star: s.eta_star,
            dominance_flag: flag,
        }),
    )?;
    let rejected = comparisons.iter().any(|c| !c.verdict.consistent());
    let violated: usize = groups
        .iter()
        .flat_map(|g| &g.batch.dominance_flags)
        .filter(|f| matches!(f, tvqueue::coupling::PathwiseDominance::Violated { .. }))
        .count();
    let summary = json!({
        "subcommand": "dominance",
        "suite": cfg.run.suite,
        "label": label,
        "run_kind": run,
        "pairing": cfg.run.pairing,
        "spec": spec.to_string(),
        "cost": g.to_string(),
        "comparisons": comparisons,
        "pathwise_violations": violated,
        "cap_incidents": incidents.len(),
        "rejected": rejected,
    });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, rejected, ..Default::default() })
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

fn cycle_spec(cfg: &ExperimentConfig) -> Result<ValidSpec, CommandError> {
    validated(cfg.queue_spec(), RunKind::Cycle)
}

fn cycles(
    cfg: &ExperimentConfig,
    spec: &ValidSpec,
) -> Result<CycleRun, CommandError> {
    let (rows, incidents) = replicate(cfg, spec, RunKind::Cycle, opts(cfg))?;
    let ids = rows.iter().map(|r| r.0).collect();
    Ok((rows.into_iter().map(|r| r.2).collect(), ids, incidents))
}

/// Busy periods of the dominating queue opened by one customer with work
/// drawn from the service law.
fn dominating_opener(spec: &ValidSpec) -> Result<ValidSpec, CommandError> {
    spec.dominating().with_init(Init::FromService).map_err(|e| invalid(e.to_string()))
}

fn default_grid(top: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect()
}

pub fn bound(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let spec = cycle_spec(cfg)?;
    let g = &cfg.model.g;
    let kappa = spec.rate.kappa.expect("validated cycle spec is periodic");
    let lambda_h = spec.rate.lambda_h;
    let g0 = g.at_zero();
    let reps = cfg.run.reps;
    if reps < 100 {
        return Err(invalid("bound needs run.reps >= 100"));
    }
    let (cyc, ids, mut incidents) = cycles(cfg, &spec)?;

    let opener = dominating_opener(&spec)?;
    let o = opts(cfg);
    let busy = map_replications(reps, cfg.run.threads, |r| run_busy_period(&opener, g, key(cfg, r).fork(0xF), o).map(|x| x.1));
    let (mut f, mut f_star) = (Vec::with_capacity(busy.len()), Vec::with_capacity(busy.len()));
    for (r, b) in busy.into_iter().enumerate() {
        match b {
            Ok(s) => {
                f.push(s.a);
                f_star.push(s.a_star);
            }
            Err(e) if e.is_cap() => {
                incidents.push(CapIncident { replication: r as u64, arm: Some("F".into()), message: e.to_string() })
            }
            Err(e) => return Err(failed(e)),
        }
    }
    let sampler = |k: ReplicationKey| run_busy_period(&opener, g, k, o).map(|(_, s)| (s.a, s.a_star)).map_err(|e| e.to_string());
    let geo = sample_prop_bound(sampler, kappa, lambda_h, g0, reps, cfg.run.seed, cfg.run.threads).map_err(failed)?;

    let a: Vec<f64> = cyc.iter().map(|s| s.a).collect();
    let a_star: Vec<f64> = cyc.iter().map(|s| s.a_star).collect();
    let f = EmpiricalDistribution::new(f).map_err(failed)?;
    let f_star = EmpiricalDistribution::new(f_star).map_err(failed)?;
    let prop2 = EmpiricalDistribution::from_slice(&geo.prop2).map_err(failed)?;
    let grid = match &cfg.run.u_grid {
        Some(u) => u.clone(),
        None => {
            let mut top = prop2.quantile(0.999);
            if let Ok(d) = EmpiricalDistribution::from_slice(&a) {
                top = top.max(d.quantile(0.999));
            }
            default_grid(top.max(kappa.max(1.0)), 50)
        }
    };
    let b = bound_result(&f, &f_star, &prop2, kappa, lambda_h, &grid, cfg.run.tol).map_err(failed)?;
    out.csv(
        "bound.csv",
        "bound",
        (0..b.u.len()).map(|i| BoundRow { u: b.u[i], j: b.j[i], j_star: b.j_star[i], prop2_cdf: b.prop2_cdf[i] }),
    )?;

    let alpha = cfg.run.alpha;
    let mut checks = Vec::new();
    if !a.is_empty() {
        let seed = cfg.run.seed;
        checks.push(("A vs geometric-sum bound", dominance_test(&a, &geo.prop2, alpha, seed)?));
        checks.push(("A_star vs geometric-sum bound", dominance_test(&a_star, &geo.prop3, alpha, seed)?));
        checks.push(("A vs shifted geometric sum", dominance_test(&a, &geo.shifted_sum, alpha, seed)?));
        let j_cdf = |u: f64| step_lookup(&b.u, &b.j, u);
        checks.push(("A vs J", test_st_dominance_cdf(&a, &j_cdf, alpha).map_err(failed)?));
        let js_cdf = |u: f64| step_lookup(&b.u, &b.j_star, u);
        checks.push(("A_star vs J_star", test_st_dominance_cdf(&a_star, &js_cdf, alpha).map_err(failed)?));
    }
    // Pathwise A <= A-bar on the same streams.
    let bars = map_replications(ids.len() as u64, cfg.run.threads, |i| {
        run_until_long_idle(&spec, g, key(cfg, ids[i as usize]), o).map(|(_, d)| d.a_bar)
    });
    let mut pathwise_ok = 0usize;
    let mut pathwise_checked = 0usize;
    for (s, bar) in cyc.iter().zip(bars) {
        if let Ok(bar) = bar {
            pathwise_checked += 1;
            pathwise_ok += usize::from(s.a <= bar);
        }
    }
    let rejected = checks.iter().any(|(_, v)| !v.consistent());
    let summary = json!({
        "subcommand": "bound",
        "spec": spec.to_string(),
        "cost": g.to_string(),
        "kappa": kappa,
        "lambda_h": lambda_h,
        "success_probability": geo.success,
        "cycles": describe(&a),
        "J": b.j_meta,
        "J_star": b.j_star_meta,
        "checks": checks.iter().map(|(name, v)| json!({ "comparison": name, "verdict": v })).collect::<Vec<_>>(),
        "pathwise_a_le_a_bar": { "checked": pathwise_checked, "holds": pathwise_ok },
        "cap_incidents": incidents.len(),
        "rejected": rejected,
    });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, rejected, ..Default::default() })
}

// ---------------------------------------------------------------------------
// tail
// ---------------------------------------------------------------------------

fn target_name(t: TailTarget) -> &'static str {
    match t {
        TailTarget::CycleLength => "cycle-length",
        TailTarget::ServedCount => "served-count",
        TailTarget::BusyPeriod => "busy-period",
    }
}

pub fn tail(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let spec = cycle_spec(cfg)?;
    let kappa = spec.rate.kappa.expect("validated cycle spec is periodic");
    let lambda_h = spec.rate.lambda_h;
    let service = &spec.joint.service;
    let rho_h = lambda_h * service.mean();
    if rho_h.is_nan() || rho_h >= 1.0 {
        return Err(invalid(format!("tail diagnostics need rho_h < 1, got {rho_h}")));
    }
    // Cycle length and served count are the g = 1 functionals.
    let one = CostFunction::one();
    let o = opts(cfg);
    let mut cfg1 = cfg.clone();
    cfg1.model.g = one.clone();
    let (cyc, _, mut incidents) = cycles(&cfg1, &spec)?;
    let mg1 = dominating_opener(&spec)?.all_join();
    let busy = map_replications(cfg.run.reps, cfg.run.threads, |r| run_busy_period(&mg1, &one, key(cfg, r).fork(0xF1), o));
    let mut phi = Vec::with_capacity(busy.len());
    for (r, b) in busy.into_iter().enumerate() {
        match b {
            Ok((_, s)) => phi.push(s.duration),
            Err(e) if e.is_cap() => {
                incidents.push(CapIncident { replication: r as u64, arm: Some("busy-period".into()), message: e.to_string() })
            }
            Err(e) => return Err(failed(e)),
        }
    }
    let setup = TailSetup { service, rho_h, kappa, lambda_h, g0: 1.0 };
    let xi: Vec<f64> = cyc.iter().map(|s| s.duration).collect();
    let eta: Vec<f64> = cyc.iter().map(|s| s.eta_star as f64).collect();
    let levels = &cfg.run.quantiles;
    let mut reports = Vec::new();
    for (target, data) in [(TailTarget::CycleLength, &xi), (TailTarget::ServedCount, &eta), (TailTarget::BusyPeriod, &phi)] {
        reports.push(tail_ratio(data, target, setup, levels).map_err(failed)?);
    }
    out.csv(
        "tail.csv",
        "tail",
        reports.iter().flat_map(|rep| {
            rep.rows.iter().map(|r| TailCsvRow {
                target: target_name(rep.target),
                level: r.level,
                u: r.u,
                survival: r.survival,
                reference: r.reference,
                ratio: r.ratio,
                bound: r.bound,
            })
        }),
    )?;
    let summary = json!({
        "subcommand": "tail",
        "label": "trend check",
        "spec": spec.to_string(),
        "rho_h": rho_h,
        "subexponential_service": service.is_subexponential(),
        "reports": reports,
        "cap_incidents": incidents.len(),
    });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, ..Default::default() })
}

// ---------------------------------------------------------------------------
// stability, steady state, moments
// ---------------------------------------------------------------------------

pub fn stability(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let report = stability_for(cfg.model.rate.lambda_h, cfg.joint()).map_err(|e| invalid(e.to_string()))?;
    let mut summary = json!({
        "subcommand": "stability",
        "verdict": report.verdict,
        "report": report,
    });
    let mut incidents = Vec::new();
    if let Some([short, long]) = cfg.run.growth {
        if !(short > 0.0 && long > short) {
            return Err(invalid("run.growth must be [short, long] with 0 < short < long"));
        }
        let spec = validated(cfg.queue_spec(), RunKind::Horizon)?;
        let g = CostFunction::one();
        let o = opts(cfg);
        let ends = map_replications(cfg.run.reps, cfg.run.threads, |r| -> Result<(f64, f64), SimError> {
            let w_short = run_horizon(&spec, short, &g, key(cfg, r), o)?.end_workload;
            let w_long = run_horizon(&spec, long, &g, key(cfg, r), o)?.end_workload;
            Ok((w_short, w_long))
        });
        let mut grew = 0usize;
        let mut done = 0usize;
        for (r, e) in ends.into_iter().enumerate() {
            match e {
                Ok((a, b)) => {
                    done += 1;
                    grew += usize::from(b > 10.0 * a);
                }
                Err(e) if e.is_cap() => incidents.push(CapIncident { replication: r as u64, arm: None, message: e.to_string() }),
                Err(e) => return Err(failed(e)),
            }
        }
        summary["growth"] = json!({
            "horizons": [short, long],
            "paths": done,
            "grew_tenfold": grew,
            "fraction": if done > 0 { grew as f64 / done as f64 } else { f64::NAN },
        });
    }
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, ..Default::default() })
}

pub fn steady_state(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let spec = cycle_spec(cfg)?;
    let g = &cfg.model.g;
    let horizon = cfg.run.horizon.ok_or_else(|| invalid("steady-state needs run.horizon"))?;
    let (cyc, _, mut incidents) = cycles(cfg, &spec)?;
    let a: Vec<f64> = cyc.iter().map(|s| s.a).collect();
    let xi: Vec<f64> = cyc.iter().map(|s| s.duration).collect();
    let ratio = ratio_estimate(&a, &xi, true).map_err(failed)?;
    let o = opts(cfg);
    let runs = map_replications(cfg.run.horizon_reps, cfg.run.threads, |r| {
        run_horizon(&spec, horizon, g, key(cfg, r).fork(0x5EED), o).map(|h| h.time_average)
    });
    let mut averages = Vec::new();
    for (r, x) in runs.into_iter().enumerate() {
        match x {
            Ok(v) => averages.push(v),
            Err(e) if e.is_cap() => {
                incidents.push(CapIncident { replication: r as u64, arm: Some("horizon".into()), message: e.to_string() })
            }
            Err(e) => return Err(failed(e)),
        }
    }
    let time_avg = mean_estimate(&averages);
    let joint_se = (ratio.se.powi(2) + time_avg.se.powi(2)).sqrt();
    let diff = ratio.estimate - time_avg.mean;
    let z = if joint_se > 0.0 { diff / joint_se } else { 0.0 };
    let summary = json!({
        "subcommand": "steady-state",
        "spec": spec.to_string(),
        "cost": g.to_string(),
        "regenerative_ratio": ratio,
        "time_average": { "mean": time_avg.mean, "se": time_avg.se, "runs": averages.len(), "horizon": horizon },
        "joint_se": joint_se,
        "z": z,
        "difference": diff,
        "within_3se": diff.abs() <= 3.0 * joint_se,
        "cap_incidents": incidents.len(),
    });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, ..Default::default() })
}

pub fn moments(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    let spec = cycle_spec(cfg)?;
    let (cyc, _, incidents) = cycles(cfg, &spec)?;
    let eta: Vec<f64> = cyc.iter().map(|s| s.eta_star as f64).collect();
    let mut reports = Vec::new();
    for &m in &cfg.run.orders {
        let r = eta_moment_report(&eta, m, &spec.joint, spec.rate.lambda_h, cfg.run.seed).map_err(failed)?;
        reports.push(json!({
            "order": m,
            "report": r,
            "last_doubling_change": r.estimate.last_doubling_change(),
        }));
    }
    let summary = json!({
        "subcommand": "moments",
        "spec": spec.to_string(),
        "cycles": eta.len(),
        "moments": reports,
        "cap_incidents": incidents.len(),
    });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, incidents, ..Default::default() })
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn exp(rate: f64) -> Marginal {
    Marginal::Exponential { rate }
}

/// A quick oracle suite on built-in presets.
pub fn validate(seed: u64, threads: Option<usize>, out: &mut Artifacts) -> Result<Report, CommandError> {
    let mut checks = Vec::new();
    let mut push = |name, pass, detail: String| checks.push(Check { name, pass, detail });

    let drain = QueueSpec::new(
        RateFunction::constant_bounded(0.0, 1.0),
        tvqueue::JointLaw::infinite_patience(exp(1.0)),
        Discipline::Fcfs,
        Init::Workload { x: 3.0 },
    );
    let (_, s) = run_busy_period(&drain, &CostFunction::identity(), ReplicationKey::new(seed, 0), SimOptions::default()).map_err(failed)?;
    push("deterministic drain", (s.duration - 3.0).abs() <= 1e-12 && (s.a - 4.5).abs() <= 1e-12, format!("tau = {}, A = {}", s.duration, s.a));

    let rate = RateFunction::sinusoid(0.5, 0.5, 1.0, 1.0);
    let counts = map_replications(20_000, threads, |r| {
        let k = ReplicationKey::new(seed, r);
        let (mut a, mut b) = (k.stream(Lane::Arrivals), k.stream(Lane::Acceptance));
        let (mut t, mut n) = (0.0, 0u32);
        while let Ok(Some(next)) = tvqueue::streams::next_arrival(&mut a, &mut b, &rate, t, 1.0) {
            n += 1;
            t = next;
        }
        n as f64
    });
    let c = mean_estimate(&counts);
    push("thinned count mean", (c.mean - 0.5).abs() <= 3.0 * c.se, format!("{} +- {} vs 0.5", c.mean, c.se));

    let mm1 = QueueSpec::new(RateFunction::constant(0.5), tvqueue::JointLaw::infinite_patience(exp(1.0)), Discipline::Fcfs, Init::Workload { x: 1.0 });
    let oracle = mg1_oracles(0.5, &exp(1.0)).map_err(failed)?;
    let taus = map_replications(20_000, threads, |r| {
        run_busy_period(&mm1, &CostFunction::one(), ReplicationKey::new(seed, r), SimOptions::default()).map(|x| x.1.duration)
    });
    let taus: Vec<f64> = taus.into_iter().collect::<Result<_, _>>().map_err(failed)?;
    let t = mean_estimate(&taus);
    push("M/M/1 mean busy period", (t.mean - oracle.mean_tau(1.0)).abs() <= 3.0 * t.se, format!("{} +- {} vs {}", t.mean, t.se, oracle.mean_tau(1.0)));

    let point = EmpiricalDistribution::new(vec![1.0; 10]).map_err(failed)?;
    let d = decompound_cdf(&point, 1.0, std::f64::consts::LN_2, &[3.5], 1e-3).map_err(failed)?;
    push("point-mass decompounding", (d.j[0] - 0.75).abs() <= 1e-9, format!("J(3.5) = {}", d.j[0]));

    let unstable = stability_for(2.0, &tvqueue::JointLaw::infinite_patience(exp(1.0))).map_err(failed)?;
    push(
        "stability verdict",
        unstable.verdict == tvqueue::bounds::StabilityVerdict::Unstable && unstable.rho_eff == 2.0,
        format!("rho_eff = {}", unstable.rho_eff),
    );

    let failed_checks = checks.iter().any(|c| !c.pass);
    let summary = json!({ "subcommand": "validate", "seed": seed, "checks": checks, "all_pass": !failed_checks });
    out.json("summary.json", "summary", &summary)?;
    Ok(Report { summary, failed_checks, ..Default::default() })
}
