//! Shared-randomness constructions: the rate-thinning coupling, the
//! waiting-room ladder and replication batches feeding the dominance tests.
//!
//! Every member of a coupling is simulated on the same [`ReplicationKey`].
//! Marks are attached to candidate points of the rate-`lambda_h` process, so
//! a customer present in two members carries the same `(S, Y)` in both.

use crate::model::{CostFunction, Discipline, QueueSpec, Room, RunKind, ValidSpec};
use crate::sim::{run_busy_period, run_cycle, run_horizon, FunctionalSample, SimError, SimOptions, WorkloadPath};
use crate::streams::{map_replications, CandidateStream, ReplicationKey};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum PathwiseDominance {
    Holds,
    Violated { first_time: f64 },
    NotApplicable,
}

impl PathwiseDominance {
    pub fn as_str(self) -> &'static str {
        match self {
            PathwiseDominance::Holds => "holds",
            PathwiseDominance::Violated { .. } => "violated",
            PathwiseDominance::NotApplicable => "not-applicable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathComparison {
    pub epochs: usize,
    pub violations: usize,
    pub first_violation: Option<f64>,
}

/// Compare `W_hi >= W_lo` at every event epoch of either path, both just
/// before and at the epoch. Both paths must be recorded.
pub fn compare_paths(lo: &WorkloadPath, hi: &WorkloadPath) -> PathComparison {
    let mut epochs: Vec<f64> = lo.events.iter().chain(&hi.events).map(|e| e.time).collect();
    epochs.push(0.0);
    epochs.sort_by(f64::total_cmp);
    epochs.dedup();
    let mut violations = 0;
    let mut first = None;
    for &t in &epochs {
        let bad = hi.workload_at(t) < lo.workload_at(t) || hi.workload_before(t) < lo.workload_before(t);
        if bad {
            violations += 1;
            first.get_or_insert(t);
        }
    }
    PathComparison { epochs: epochs.len(), violations, first_violation: first }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPairSample {
    pub replication_id: u64,
    /// The rate-`lambda` queue.
    pub sample_lo: FunctionalSample,
    /// The rate-`lambda_h` queue.
    pub sample_hi: FunctionalSample,
    pub pathwise_dominance: PathwiseDominance,
}

/// Busy periods of the `lambda`-queue and its `lambda_h`-queue on shared
/// candidates; pathwise dominance is checked when patience is infinite.
pub fn run_coupled_rates(
    spec_lo: &ValidSpec,
    g: &CostFunction,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<CoupledPairSample, SimError> {
    let spec_hi = spec_lo.dominating();
    let check = spec_lo.joint.has_infinite_patience();
    let opts = SimOptions { record: opts.record || check, ..opts };
    let (path_lo, sample_lo) = run_busy_period(spec_lo, g, key, opts)?;
    let (path_hi, sample_hi) = run_busy_period(&spec_hi, g, key, opts)?;
    let pathwise_dominance = if check {
        match compare_paths(&path_lo, &path_hi).first_violation {
            None => PathwiseDominance::Holds,
            Some(first_time) => PathwiseDominance::Violated { first_time },
        }
    } else {
        PathwiseDominance::NotApplicable
    };
    Ok(CoupledPairSample { replication_id: key.id, sample_lo, sample_hi, pathwise_dominance })
}

/// Pathwise comparison of the coupled pair over a fixed window `[0, T]`,
/// computed whatever the patience law.
pub fn check_pathwise_window(
    spec_lo: &ValidSpec,
    horizon: f64,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<PathComparison, SimError> {
    let spec_hi = spec_lo.dominating();
    let g = CostFunction::one();
    let opts = SimOptions { record: true, ..opts };
    let lo = run_horizon(spec_lo, horizon, &g, key, opts)?;
    let hi = run_horizon(&spec_hi, horizon, &g, key, opts)?;
    Ok(compare_paths(&lo.path, &hi.path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomLadderSample {
    pub replication_id: u64,
    pub ks: Vec<Room>,
    pub samples: Vec<FunctionalSample>,
    pub window: f64,
    /// Smallest ladder room whose path equals the unbounded one on
    /// `[0, window]`.
    pub k_of_u: Room,
    /// Every ladder member at or above `k_of_u` matches the unbounded one.
    pub tail_matches: bool,
    pub candidates_in_window: u64,
    pub accepted_in_window: u64,
}

fn join_signature(path: &WorkloadPath, u: f64) -> Vec<f64> {
    path.join_times().take_while(|&t| t <= u).collect()
}

/// Count candidate and accepted points of a replication on `[0, u]`.
pub fn window_counts(spec: &QueueSpec, key: ReplicationKey, u: f64) -> (u64, u64) {
    let mut cands = CandidateStream::new(key, &spec.rate, &spec.joint);
    let (mut all, mut kept) = (0, 0);
    while let Some(c) = cands.next_candidate() {
        if c.time > u {
            break;
        }
        all += 1;
        kept += u64::from(c.accepted);
    }
    (all, kept)
}

/// LCFS-PR busy periods for every room size in `ks` on one shared stream.
pub fn run_room_ladder(
    spec: &ValidSpec,
    ks: &[Room],
    g: &CostFunction,
    window: f64,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<RoomLadderSample, SimError> {
    if ks.windows(2).any(|w| w[1] <= w[0]) || ks.last() != Some(&Room::Infinite) {
        return Err(SimError::Precondition("ladder must be strictly ascending and end with an unbounded room".into()));
    }
    let opts = SimOptions { record: true, ..opts };
    let mut samples = Vec::with_capacity(ks.len());
    let mut signatures = Vec::with_capacity(ks.len());
    for &k in ks {
        let member = spec.with_discipline(Discipline::LcfsPr { room: k });
        let (path, sample) = run_busy_period(&member, g, key, opts)?;
        signatures.push(join_signature(&path, window));
        samples.push(sample);
    }
    let reference = signatures.last().cloned().unwrap_or_default();
    let matches: Vec<bool> = signatures.iter().map(|s| *s == reference).collect();
    let first = matches.iter().position(|&m| m).unwrap_or(ks.len() - 1);
    let tail_matches = matches[first..].iter().all(|&m| m);
    let (candidates_in_window, accepted_in_window) = window_counts(spec, key, window);
    Ok(RoomLadderSample {
        replication_id: key.id,
        ks: ks.to_vec(),
        samples,
        window,
        k_of_u: ks[first],
        tail_matches,
        candidates_in_window,
        accepted_in_window,
    })
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum BatchKind {
    /// `[lambda, lambda_h]`.
    Rates,
    /// One LCFS-PR arm per room size.
    Rooms(Vec<Room>),
    /// `[Psi, all customers join]`.
    AllJoin,
    /// Arbitrary labelled arms.
    Custom(Vec<(String, ValidSpec)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// All arms of a replication share one key.
    Coupled,
    /// Each arm uses its own derived key.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arm {
    pub label: String,
    pub samples: Vec<FunctionalSample>,
}

impl Arm {
    pub fn column(&self, f: impl Fn(&FunctionalSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedBatch {
    pub pairing: Pairing,
    pub arms: Vec<Arm>,
    /// Replication ids kept, aligned with every arm.
    pub ids: Vec<u64>,
    /// Pathwise check between the first two arms, aligned with `ids`.
    pub dominance_flags: Vec<PathwiseDominance>,
    pub errored: Vec<(u64, String)>,
    pub cap_incidents: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CouplingError {
    #[error("batches need at least 100 replications, got {0}")]
    TooFewReplications(u64),
    #[error("invalid arm: {0}")]
    InvalidArm(String),
}

#[derive(Debug, Clone)]
pub struct BatchConfig<'a> {
    pub spec: &'a ValidSpec,
    pub g: &'a CostFunction,
    pub run: RunKind,
    pub pairing: Pairing,
    pub reps: u64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub opts: SimOptions,
}

fn arms_for(kind: &BatchKind, spec: &ValidSpec) -> Result<Vec<(String, ValidSpec)>, CouplingError> {
    Ok(match kind {
        BatchKind::Rates => vec![("lambda".into(), spec.clone()), ("lambda_h".into(), spec.dominating())],
        BatchKind::Rooms(ks) => {
            if ks.is_empty() {
                return Err(CouplingError::InvalidArm("empty room ladder".into()));
            }
            ks.iter()
                .map(|&k| (format!("k={k}"), spec.with_discipline(Discipline::LcfsPr { room: k })))
                .collect()
        }
        BatchKind::AllJoin => vec![("psi".into(), spec.clone()), ("all-join".into(), spec.all_join())],
        BatchKind::Custom(arms) => {
            if arms.is_empty() {
                return Err(CouplingError::InvalidArm("no arms".into()));
            }
            arms.clone()
        }
    })
}

fn run_member(
    spec: &QueueSpec,
    g: &CostFunction,
    run: RunKind,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<(WorkloadPath, FunctionalSample), SimError> {
    match run {
        RunKind::Cycle => run_cycle(spec, g, key, opts),
        _ => run_busy_period(spec, g, key, opts),
    }
}

/// Replication batch over several arms, mapped deterministically from
/// replication ids. A replication that fails in any arm is dropped from all
/// arms and reported in `errored`.
pub fn paired_functional_batch(kind: &BatchKind, cfg: &BatchConfig<'_>) -> Result<PairedBatch, CouplingError> {
    if cfg.reps < 100 {
        return Err(CouplingError::TooFewReplications(cfg.reps));
    }
    let arms = arms_for(kind, cfg.spec)?;
    let check = matches!(kind, BatchKind::Rates | BatchKind::AllJoin)
        && cfg.pairing == Pairing::Coupled
        && cfg.spec.joint.has_infinite_patience();
    let opts = SimOptions { record: cfg.opts.record || check, ..cfg.opts };
    let rows = map_replications(cfg.reps, cfg.threads, |r| {
        let base = ReplicationKey::new(cfg.seed, r);
        let mut paths = Vec::with_capacity(2);
        let mut row = Vec::with_capacity(arms.len());
        for (i, (_, spec)) in arms.iter().enumerate() {
            let key = match cfg.pairing {
                Pairing::Coupled => base,
                Pairing::Independent => base.fork(i as u64 + 1),
            };
            let (path, sample) = run_member(spec, cfg.g, cfg.run, key, opts)?;
            if check && i < 2 {
                paths.push(path);
            }
            row.push(sample);
        }
        let flag = if check {
            match compare_paths(&paths[0], &paths[1]).first_violation {
                None => PathwiseDominance::Holds,
                Some(first_time) => PathwiseDominance::Violated { first_time },
            }
        } else {
            PathwiseDominance::NotApplicable
        };
        Ok::<_, SimError>((row, flag))
    });
    let mut out = PairedBatch {
        pairing: cfg.pairing,
        arms: arms.iter().map(|(label, _)| Arm { label: label.clone(), samples: Vec::new() }).collect(),
        ids: Vec::new(),
        dominance_flags: Vec::new(),
        errored: Vec::new(),
        cap_incidents: 0,
    };
    for (r, result) in rows.into_iter().enumerate() {
        match result {
            Ok((row, flag)) => {
                out.ids.push(r as u64);
                out.dominance_flags.push(flag);
                for (arm, s) in out.arms.iter_mut().zip(row) {
                    arm.samples.push(s);
                }
            }
            Err(e) => {
                if e.is_cap() {
                    out.cap_incidents += 1;
                }
                out.errored.push((r as u64, e.to_string()));
            }
        }
    }
    Ok(out)
}
