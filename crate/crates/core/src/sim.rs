//! Event-driven simulation of the FCFS and LCFS-PR queues.
//!
//! The workload is carried as the *clear time* `c`, the epoch at which the
//! server would empty if nobody else joined, so `W(t) = max(c - t, 0)` and a
//! join at `t` with service `S` sets `c = max(c, t) + S`. Both disciplines
//! update `c` with the same float operations, which makes their workload
//! paths bitwise identical under infinite patience and makes pathwise
//! comparisons between coupled queues exact.

use crate::model::{CostFunction, Discipline, Init, QueueSpec, Room, RunKind};
use crate::stats::CompensatedSum;
use crate::streams::{initial_from_service, Candidate, CandidateStream, ReplicationKey};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub max_events: u64,
    pub max_time: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_events: 10_000_000, max_time: 1e7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub caps: Caps,
    /// Keep the full event log in the returned path.
    pub record: bool,
}

impl SimOptions {
    pub fn recording() -> Self {
        SimOptions { caps: Caps::default(), record: true }
    }

    pub fn with_caps(mut self, caps: Caps) -> Self {
        self.caps = caps;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Join,
    BalkPatience,
    BalkRoom,
    ServiceCompletion,
    EmptyHit,
    CycleEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Join => "join",
            EventKind::BalkPatience => "balk-patience",
            EventKind::BalkRoom => "balk-room",
            EventKind::ServiceCompletion => "service-completion",
            EventKind::EmptyHit => "empty-hit",
            EventKind::CycleEnd => "cycle-end",
        }
    }

    pub fn is_arrival(self) -> bool {
        matches!(self, EventKind::Join | EventKind::BalkPatience | EventKind::BalkRoom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    /// `W(t-)`.
    pub w_pre: f64,
    /// Service time for a join, 0 otherwise.
    pub jump: f64,
    /// `L(t-)`.
    pub l_pre: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndReason {
    TauHit,
    CycleEnd,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkloadPath {
    pub initial_workload: f64,
    /// Empty unless the run was recording.
    pub events: Vec<EventRecord>,
    pub end_time: f64,
    pub end_reason: Option<EndReason>,
    /// `(join time, clear time after the join)`, recorded with the events.
    clear_log: Vec<(f64, f64)>,
}

impl WorkloadPath {
    fn clear_at(&self, t: f64, include_t: bool) -> f64 {
        let n = if include_t {
            self.clear_log.partition_point(|e| e.0 <= t)
        } else {
            self.clear_log.partition_point(|e| e.0 < t)
        };
        if n == 0 {
            self.initial_workload
        } else {
            self.clear_log[n - 1].1
        }
    }

    /// `W(t)` (right-continuous). Requires a recorded path.
    pub fn workload_at(&self, t: f64) -> f64 {
        (self.clear_at(t, true) - t).max(0.0)
    }

    /// `W(t-)`. Requires a recorded path.
    pub fn workload_before(&self, t: f64) -> f64 {
        (self.clear_at(t, false) - t).max(0.0)
    }

    /// Times of join events, in order.
    pub fn join_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.clear_log.iter().map(|e| e.0)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalSample {
    pub horizon_kind: RunKind,
    /// `tau`, `xi` or the horizon length.
    pub duration: f64,
    /// `int g(W(t)) dt` over the run.
    pub a: f64,
    /// `sum g(W(t-))` over joins.
    pub a_star: f64,
    /// Joins, not counting the initial customer.
    pub eta_star: u64,
    pub balked_patience: u64,
    pub balked_room: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapKind {
    Events,
    Time,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("cap exceeded ({kind:?}) at t = {}", partial.1.duration)]
    CapExceeded { kind: CapKind, partial: Box<(WorkloadPath, FunctionalSample)> },
    #[error("reversed bounds: w_lo = {w_lo} > w_hi = {w_hi}")]
    ReversedBounds { w_hi: f64, w_lo: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl SimError {
    pub fn is_cap(&self) -> bool {
        matches!(self, SimError::CapExceeded { .. })
    }
}

// ---------------------------------------------------------------------------
// Segment integrals
// ---------------------------------------------------------------------------

const QUAD_TOL: f64 = 1e-9;
const QUAD_DEPTH: u32 = 48;

/// `int g(W(t)) dt` over a unit-slope segment from `w_hi` down to `w_lo`,
/// i.e. `int_{w_lo}^{w_hi} g(u) du`.
pub fn segment_integral(g: &CostFunction, w_hi: f64, w_lo: f64) -> Result<f64, SimError> {
    if !(w_lo >= 0.0 && w_lo <= w_hi) {
        return Err(SimError::ReversedBounds { w_hi, w_lo });
    }
    Ok(integrate(g, w_hi, w_lo))
}

fn integrate(g: &CostFunction, w_hi: f64, w_lo: f64) -> f64 {
    if w_hi <= w_lo {
        return 0.0;
    }
    if let Some(c) = g.as_constant() {
        return c * (w_hi - w_lo);
    }
    if let (Some(hi), Some(lo)) = (g.antiderivative(w_hi), g.antiderivative(w_lo)) {
        return hi - lo;
    }
    let mut cuts: Vec<f64> = g.breakpoints().into_iter().filter(|&b| b > w_lo && b < w_hi).collect();
    cuts.sort_by(f64::total_cmp);
    let mut total = CompensatedSum::default();
    let mut a = w_lo;
    for b in cuts.into_iter().chain(std::iter::once(w_hi)) {
        total.add(adaptive_simpson(&|w| g.eval(w), a, b, QUAD_TOL));
        a = b;
    }
    total.value()
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // Endpoints are evaluated one ulp inside so a jump sitting exactly on a
    // split point does not leak into the neighbouring piece.
    let fa = f(a.next_up().min(b));
    let fb = f(b.next_down().max(a));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, QUAD_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct Engine<'a> {
    g: &'a CostFunction,
    g0: f64,
    room: Room,
    lcfs: bool,
    caps: Caps,
    record: bool,
    now: f64,
    clear: f64,
    departures: VecDeque<f64>,
    stack: Vec<f64>,
    top_since: f64,
    a: CompensatedSum,
    a_star: CompensatedSum,
    eta: u64,
    balk_patience: u64,
    balk_room: u64,
    processed: u64,
    path: WorkloadPath,
}

impl<'a> Engine<'a> {
    fn new(spec: &QueueSpec, g: &'a CostFunction, x: Option<f64>, opts: SimOptions) -> Self {
        let (room, lcfs) = match spec.discipline {
            Discipline::Fcfs => (Room::Infinite, false),
            Discipline::LcfsPr { room } => (room, true),
        };
        let mut e = Engine {
            g,
            g0: g.at_zero(),
            room,
            lcfs,
            caps: opts.caps,
            record: opts.record,
            now: 0.0,
            clear: 0.0,
            departures: VecDeque::new(),
            stack: Vec::new(),
            top_since: 0.0,
            a: CompensatedSum::default(),
            a_star: CompensatedSum::default(),
            eta: 0,
            balk_patience: 0,
            balk_room: 0,
            processed: 0,
            path: WorkloadPath::default(),
        };
        if let Some(x) = x {
            e.clear = x;
            e.path.initial_workload = x;
            if lcfs {
                e.stack.push(x);
            } else {
                e.departures.push_back(x);
            }
        }
        e
    }

    fn depth(&self) -> usize {
        if self.lcfs {
            self.stack.len()
        } else {
            self.departures.len()
        }
    }

    fn workload_at(&self, t: f64) -> f64 {
        (self.clear - t).max(0.0)
    }

    fn push_event(&mut self, time: f64, kind: EventKind, w_pre: f64, jump: f64, l_pre: usize) {
        if self.record {
            self.path.events.push(EventRecord { time, kind, w_pre, jump, l_pre });
        }
    }

    /// Move the clock to `t`, integrating `g(W)` and retiring completions
    /// at or before `t`.
    fn advance_to(&mut self, t: f64) {
        if t > self.now {
            let w_hi = self.workload_at(self.now);
            let w_lo = self.workload_at(t);
            self.a.add(integrate(self.g, w_hi, w_lo));
            let idle = t - self.clear.max(self.now);
            if idle > 0.0 {
                self.a.add(self.g0 * idle);
            }
        }
        self.retire(t);
        if t > self.now {
            self.now = t;
        }
    }

    fn retire(&mut self, t: f64) {
        if self.lcfs {
            while let Some(&top) = self.stack.last() {
                let done = if self.stack.len() == 1 { self.clear } else { (self.top_since + top).min(self.clear) };
                if done > t {
                    break;
                }
                let depth = self.stack.len();
                self.stack.pop();
                self.top_since = done;
                let kind = if depth == 1 { EventKind::EmptyHit } else { EventKind::ServiceCompletion };
                let w = self.workload_at(done);
                self.push_event(done, kind, w, 0.0, depth);
            }
        } else {
            while let Some(&done) = self.departures.front() {
                if done > t {
                    break;
                }
                let depth = self.departures.len();
                self.departures.pop_front();
                let kind = if depth == 1 { EventKind::EmptyHit } else { EventKind::ServiceCompletion };
                let w = self.workload_at(done);
                self.push_event(done, kind, w, 0.0, depth);
            }
        }
    }

    /// Offer the customer at `c.time`; the clock must already be there.
    fn arrive(&mut self, c: &Candidate) -> EventKind {
        let t = c.time;
        let w_pre = self.workload_at(t);
        let l_pre = self.depth();
        self.processed += 1;
        let kind = if !self.room.admits(l_pre) {
            self.balk_room += 1;
            EventKind::BalkRoom
        } else if c.mark.patience < w_pre {
            self.balk_patience += 1;
            EventKind::BalkPatience
        } else {
            let s = c.mark.service;
            self.a_star.add(self.g.eval(w_pre));
            self.eta += 1;
            self.clear = self.clear.max(t) + s;
            if self.lcfs {
                if let Some(top) = self.stack.last_mut() {
                    *top = (*top - (t - self.top_since)).max(0.0);
                }
                self.stack.push(s);
                self.top_since = t;
            } else {
                self.departures.push_back(self.clear);
            }
            if self.record {
                self.path.clear_log.push((t, self.clear));
            }
            EventKind::Join
        };
        let jump = if kind == EventKind::Join { c.mark.service } else { 0.0 };
        self.push_event(t, kind, w_pre, jump, l_pre);
        kind
    }

    fn over_cap(&self) -> Option<CapKind> {
        if self.processed > self.caps.max_events {
            Some(CapKind::Events)
        } else if self.now > self.caps.max_time || self.clear > self.caps.max_time {
            Some(CapKind::Time)
        } else {
            None
        }
    }

    fn finish(mut self, kind: RunKind, duration: f64, reason: EndReason) -> (WorkloadPath, FunctionalSample) {
        let (a, a_star) = match self.g.as_constant() {
            Some(c) => (c * duration, c * self.eta as f64),
            None => (self.a.value(), self.a_star.value()),
        };
        self.path.end_time = duration;
        self.path.end_reason = Some(reason);
        let sample = FunctionalSample {
            horizon_kind: kind,
            duration,
            a,
            a_star,
            eta_star: self.eta,
            balked_patience: self.balk_patience,
            balked_room: self.balk_room,
        };
        (self.path, sample)
    }

    fn cap_error(self, kind: RunKind, cap: CapKind) -> SimError {
        let t = self.now;
        let partial = self.finish(kind, t, EndReason::Horizon);
        SimError::CapExceeded { kind: cap, partial: Box::new(partial) }
    }
}

fn initial_workload(spec: &QueueSpec, key: ReplicationKey) -> Option<f64> {
    match spec.init {
        Init::Workload { x } => Some(x),
        Init::FromService => Some(initial_from_service(key, &spec.joint)),
        Init::Empty => None,
    }
}

/// Smallest `kappa * n >= b` with `n >= 1`.
pub fn next_period_multiple(b: f64, kappa: f64) -> f64 {
    let mut n = (b / kappa).ceil().max(1.0);
    while kappa * n < b {
        n += 1.0;
    }
    kappa * n
}

/// One busy period from `W(0) = x` until the workload first hits zero.
pub fn run_busy_period(
    spec: &QueueSpec,
    g: &CostFunction,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<(WorkloadPath, FunctionalSample), SimError> {
    let x = initial_workload(spec, key)
        .ok_or_else(|| SimError::Precondition("busy-period runs need a nonempty initial state".into()))?;
    let mut cands = CandidateStream::new(key, &spec.rate, &spec.joint);
    let mut eng = Engine::new(spec, g, Some(x), opts);
    while let Some(c) = cands.next_accepted(eng.clear, false) {
        eng.advance_to(c.time);
        eng.arrive(&c);
        if let Some(cap) = eng.over_cap() {
            return Err(eng.cap_error(RunKind::BusyPeriod, cap));
        }
    }
    let tau = eng.clear;
    eng.advance_to(tau);
    Ok(eng.finish(RunKind::BusyPeriod, tau, EndReason::TauHit))
}

fn period_of(spec: &QueueSpec) -> Result<f64, SimError> {
    if spec.init != Init::Empty {
        return Err(SimError::Precondition("cycle runs start from an empty system".into()));
    }
    spec.rate
        .kappa
        .ok_or_else(|| SimError::Precondition("cycle runs need a periodic rate".into()))
}

/// One regenerative cycle from an empty system: runs until the first
/// `kappa * n` (n >= 1) lying in an idle interval.
pub fn run_cycle(
    spec: &QueueSpec,
    g: &CostFunction,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<(WorkloadPath, FunctionalSample), SimError> {
    let kappa = period_of(spec)?;
    let mut cands = CandidateStream::new(key, &spec.rate, &spec.joint);
    let mut eng = Engine::new(spec, g, None, opts);
    loop {
        let xi = next_period_multiple(eng.clear, kappa);
        match cands.next_accepted(xi, true) {
            Some(c) => {
                eng.advance_to(c.time);
                eng.arrive(&c);
                if let Some(cap) = eng.over_cap() {
                    return Err(eng.cap_error(RunKind::Cycle, cap));
                }
            }
            None => {
                eng.advance_to(xi);
                if eng.record {
                    match eng.path.events.last_mut() {
                        Some(last) if last.time == xi => last.kind = EventKind::CycleEnd,
                        _ => eng.push_event(xi, EventKind::CycleEnd, 0.0, 0.0, 0),
                    }
                }
                return Ok(eng.finish(RunKind::Cycle, xi, EndReason::CycleEnd));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonResult {
    pub path: WorkloadPath,
    pub sample: FunctionalSample,
    /// `(1/T) int_0^T g(W(t)) dt`.
    pub time_average: f64,
    pub end_workload: f64,
    pub end_length: usize,
}

/// Simulate on `[0, T]` from the spec's initial state.
pub fn run_horizon(
    spec: &QueueSpec,
    horizon: f64,
    g: &CostFunction,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<HorizonResult, SimError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::Precondition(format!("horizon must be finite and > 0, got {horizon}")));
    }
    let x = initial_workload(spec, key);
    let mut cands = CandidateStream::new(key, &spec.rate, &spec.joint);
    let mut eng = Engine::new(spec, g, x, opts);
    // Long horizons are the point of this run, so only the event cap applies.
    while let Some(c) = cands.next_accepted(horizon, false) {
        eng.advance_to(c.time);
        eng.arrive(&c);
        if eng.processed > eng.caps.max_events {
            return Err(eng.cap_error(RunKind::Horizon, CapKind::Events));
        }
    }
    eng.advance_to(horizon);
    let end_workload = eng.workload_at(horizon);
    let end_length = eng.depth();
    let (path, sample) = eng.finish(RunKind::Horizon, horizon, EndReason::Horizon);
    let time_average = match g.as_constant() {
        Some(c) => c,
        None => sample.a / horizon,
    };
    Ok(HorizonResult { path, sample, time_average, end_workload, end_length })
}

/// A cycle path cut at its idle periods, up to the first idle period longer
/// than `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongIdleDecomposition {
    pub kappa: f64,
    /// Index (from 1) of the first idle period longer than `kappa`.
    pub iota: u64,
    /// First multiple of `kappa` inside that idle period.
    pub zeta: f64,
    /// `|I^i|` for `i < iota`, each at most `kappa`.
    pub idle_lengths: Vec<f64>,
    /// `|B^i|` for `i < iota`.
    pub busy_lengths: Vec<f64>,
    /// `int_{B^i} g(W) dt` for `i < iota`.
    pub busy_a: Vec<f64>,
    /// `sum g(W(t-))` over joins in `B^i` for `i < iota`.
    pub busy_a_star: Vec<f64>,
    /// Start of the long idle period.
    pub long_idle_start: f64,
    /// `iota * kappa * g(0) + sum_{i < iota} busy_a[i]`.
    pub a_bar: f64,
    /// `iota * g(0) + sum_{i < iota} busy_a_star[i]`.
    pub a_bar_star: f64,
    /// `int_0^zeta g(W) dt` on the same path.
    pub a_to_zeta: f64,
}

/// Simulate from empty until the first idle period exceeding `kappa`.
pub fn run_until_long_idle(
    spec: &QueueSpec,
    g: &CostFunction,
    key: ReplicationKey,
    opts: SimOptions,
) -> Result<(WorkloadPath, LongIdleDecomposition), SimError> {
    let kappa = period_of(spec)?;
    let mut cands = CandidateStream::new(key, &spec.rate, &spec.joint);
    let mut eng = Engine::new(spec, g, None, opts);
    let mut idle_lengths = Vec::new();
    let mut busy_lengths = Vec::new();
    let mut busy_a = Vec::new();
    let mut busy_a_star = Vec::new();
    let mut index = 1u64;
    loop {
        let b = eng.clear;
        let Some(first) = cands.next_accepted(b + kappa, true) else {
            break;
        };
        idle_lengths.push(first.time - b);
        eng.advance_to(first.time);
        let a0 = eng.a.value();
        let s0 = eng.a_star.value();
        let e0 = eng.eta;
        let start = first.time;
        eng.arrive(&first);
        while let Some(c) = cands.next_accepted(eng.clear, false) {
            eng.advance_to(c.time);
            eng.arrive(&c);
            if let Some(cap) = eng.over_cap() {
                return Err(eng.cap_error(RunKind::Cycle, cap));
            }
        }
        let end = eng.clear;
        eng.advance_to(end);
        busy_lengths.push(end - start);
        match g.as_constant() {
            Some(c) => {
                busy_a.push(c * (end - start));
                busy_a_star.push(c * (eng.eta - e0) as f64);
            }
            None => {
                busy_a.push(eng.a.value() - a0);
                busy_a_star.push(eng.a_star.value() - s0);
            }
        }
        index += 1;
        if let Some(cap) = eng.over_cap() {
            return Err(eng.cap_error(RunKind::Cycle, cap));
        }
    }
    let long_idle_start = eng.clear;
    let zeta = next_period_multiple(long_idle_start, kappa);
    eng.advance_to(zeta);
    let g0 = g.at_zero();
    let iota = index;
    let mut sum = CompensatedSum::default();
    sum.add(iota as f64 * kappa * g0);
    busy_a.iter().for_each(|&v| sum.add(v));
    let a_bar = sum.value();
    let mut sum = CompensatedSum::default();
    sum.add(iota as f64 * g0);
    busy_a_star.iter().for_each(|&v| sum.add(v));
    let a_bar_star = sum.value();
    let (path, sample) = eng.finish(RunKind::Cycle, zeta, EndReason::CycleEnd);
    Ok((
        path,
        LongIdleDecomposition {
            kappa,
            iota,
            zeta,
            idle_lengths,
            busy_lengths,
            busy_a,
            busy_a_star,
            long_idle_start,
            a_bar,
            a_bar_star,
            a_to_zeta: sample.a,
        },
    ))
}

/// Replay a recorded path against the candidate stream that produced it and
/// check every join/balk decision and every recorded pre-jump workload.
pub fn audit_path(spec: &QueueSpec, key: ReplicationKey, path: &WorkloadPath) -> Result<(), String> {
    let room = spec.discipline.room();
    let mut cands = CandidateStream::new(key, &spec.rate, &spec.joint);
    let mut w_after = path.initial_workload;
    let mut t_prev = 0.0;
    for (i, ev) in path.events.iter().enumerate() {
        if !ev.kind.is_arrival() {
            continue;
        }
        let c = cands
            .next_accepted(f64::INFINITY, true)
            .ok_or_else(|| format!("event {i}: no candidate left"))?;
        if c.time != ev.time {
            return Err(format!("event {i}: time {} but candidate at {}", ev.time, c.time));
        }
        let expected_w = (w_after - (ev.time - t_prev)).max(0.0);
        if (expected_w - ev.w_pre).abs() > 1e-9 * (1.0 + expected_w) {
            return Err(format!("event {i}: W(t-) = {} but drain gives {expected_w}", ev.w_pre));
        }
        let expected = if !room.admits(ev.l_pre) {
            EventKind::BalkRoom
        } else if c.mark.patience < ev.w_pre {
            EventKind::BalkPatience
        } else {
            EventKind::Join
        };
        if expected != ev.kind {
            return Err(format!("event {i}: recorded {:?}, rule gives {expected:?}", ev.kind));
        }
        w_after = ev.w_pre + ev.jump;
        t_prev = ev.time;
    }
    Ok(())
}
