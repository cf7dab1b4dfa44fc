//! Replication-addressable random streams and Poisson thinning.
//!
//! A stream is keyed by `(seed, replication_id, lane)`: the seed and
//! replication id form the ChaCha key and the lane selects the ChaCha stream
//! word, so any stream can be recreated on any thread without coordination.

use crate::model::{JointLaw, Mark, Marginal, RateFunction};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent substreams of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    /// Exponential gaps of the candidate (rate `lambda_h`) process.
    Arrivals,
    /// One uniform per candidate deciding whether it is kept.
    Acceptance,
    /// Two uniforms per candidate mapped to `(S, Y)`.
    Marks,
    /// Everything else: random initial workload, bound samplers.
    Auxiliary,
}

impl Lane {
    fn word(self) -> u64 {
        match self {
            Lane::Arrivals => 1,
            Lane::Acceptance => 2,
            Lane::Marks => 3,
            Lane::Auxiliary => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReplicationKey {
    pub seed: u64,
    pub id: u64,
}

impl ReplicationKey {
    pub fn new(seed: u64, id: u64) -> Self {
        ReplicationKey { seed, id }
    }

    pub fn stream(self, lane: Lane) -> RandomStream {
        RandomStream::new(self.seed, self.id, lane)
    }

    /// A derived key for sub-experiments that must not reuse this
    /// replication's variates (e.g. the independent arm of a pair).
    pub fn fork(self, salt: u64) -> Self {
        ReplicationKey { seed: self.seed ^ salt.rotate_left(17).wrapping_mul(0x9E37_79B9_7F4A_7C15), id: self.id }
    }
}

#[derive(Clone)]
pub struct RandomStream {
    pub seed: u64,
    pub replication_id: u64,
    pub lane: Lane,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for RandomStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RandomStream")
            .field("seed", &self.seed)
            .field("replication_id", &self.replication_id)
            .field("lane", &self.lane)
            .field("word_pos", &self.rng.get_word_pos())
            .finish()
    }
}

impl RandomStream {
    pub fn new(seed: u64, replication_id: u64, lane: Lane) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&replication_id.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(lane.word());
        RandomStream { seed, replication_id, lane, rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential with the given rate.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }

    /// Geometric on `{1, 2, ...}` with success probability `p`.
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 1;
        }
        if p <= 0.0 {
            return u64::MAX;
        }
        let k = (self.uniform().ln() / (-p).ln_1p()).floor();
        if k >= u64::MAX as f64 {
            u64::MAX
        } else {
            1 + k as u64
        }
    }
}

/// One draw from the joint law; consumes exactly two uniforms.
pub fn sample_joint(marks: &mut RandomStream, joint: &JointLaw) -> Mark {
    let u1 = marks.uniform();
    let u2 = marks.uniform();
    joint.sample_from_uniforms(u1, u2)
}

/// One draw from a marginal by inversion; consumes one uniform.
pub fn sample_marginal(stream: &mut RandomStream, law: &Marginal) -> f64 {
    law.quantile(stream.uniform())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StreamError {
    #[error("t_now must be >= 0, got {0}")]
    NegativeTime(f64),
    #[error("horizon {horizon} must exceed t_now {t_now}")]
    EmptyWindow { t_now: f64, horizon: f64 },
}

/// First accepted arrival of the thinned process in `(t_now, horizon]`.
///
/// Candidates come from `arrivals` at rate `lambda_h`; each consumes one
/// uniform from `acceptance`. A zero `lambda_h` yields no arrival at all.
pub fn next_arrival(
    arrivals: &mut RandomStream,
    acceptance: &mut RandomStream,
    rate: &RateFunction,
    t_now: f64,
    horizon: f64,
) -> Result<Option<f64>, StreamError> {
    if t_now.is_nan() || t_now < 0.0 {
        return Err(StreamError::NegativeTime(t_now));
    }
    if horizon.is_nan() || horizon <= t_now {
        return Err(StreamError::EmptyWindow { t_now, horizon });
    }
    if rate.lambda_h <= 0.0 {
        return Ok(None);
    }
    let mut t = t_now;
    loop {
        t += arrivals.exponential(rate.lambda_h);
        if t > horizon {
            return Ok(None);
        }
        let u = acceptance.uniform();
        if u * rate.lambda_h < rate.value_at(t) {
            return Ok(Some(t));
        }
    }
}

/// A point of the candidate process with its acceptance decision and mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// 0-based position in the candidate sequence.
    pub index: u64,
    pub time: f64,
    pub accepted: bool,
    pub mark: Mark,
}

/// The rate-`lambda_h` candidate process of one replication.
///
/// Every candidate draws its gap, its acceptance uniform and its mark
/// whether or not it is accepted, so two queues built on the same key see
/// the same marks at the same candidates regardless of their rates.
#[derive(Debug, Clone)]
pub struct CandidateStream {
    arrivals: RandomStream,
    acceptance: RandomStream,
    marks: RandomStream,
    rate: RateFunction,
    joint: JointLaw,
    time: f64,
    next_index: u64,
    peeked: Option<Candidate>,
    generated: u64,
}

impl CandidateStream {
    pub fn new(key: ReplicationKey, rate: &RateFunction, joint: &JointLaw) -> Self {
        CandidateStream {
            arrivals: key.stream(Lane::Arrivals),
            acceptance: key.stream(Lane::Acceptance),
            marks: key.stream(Lane::Marks),
            rate: rate.clone(),
            joint: joint.clone(),
            time: 0.0,
            next_index: 0,
            peeked: None,
            generated: 0,
        }
    }

    /// Number of candidates drawn so far (including a peeked one).
    pub fn generated(&self) -> u64 {
        self.generated
    }

    fn draw(&mut self) -> Option<Candidate> {
        if self.rate.lambda_h <= 0.0 {
            return None;
        }
        self.time += self.arrivals.exponential(self.rate.lambda_h);
        let u = self.acceptance.uniform();
        let accepted = u * self.rate.lambda_h < self.rate.value_at(self.time);
        let mark = sample_joint(&mut self.marks, &self.joint);
        let c = Candidate { index: self.next_index, time: self.time, accepted, mark };
        self.next_index += 1;
        self.generated += 1;
        Some(c)
    }

    /// Next candidate regardless of acceptance.
    pub fn next_candidate(&mut self) -> Option<Candidate> {
        self.peeked.take().or_else(|| self.draw())
    }

    /// Next accepted candidate with time `< limit` (or `<= limit` when
    /// `inclusive`). Rejected candidates before the limit are consumed; the
    /// first candidate past it is kept for the next call.
    pub fn next_accepted(&mut self, limit: f64, inclusive: bool) -> Option<Candidate> {
        loop {
            let c = self.next_candidate()?;
            let within = if inclusive { c.time <= limit } else { c.time < limit };
            if !within {
                self.peeked = Some(c);
                return None;
            }
            if c.accepted {
                return Some(c);
            }
        }
    }
}

/// Initial workload drawn from the service law on the auxiliary lane.
pub fn initial_from_service(key: ReplicationKey, joint: &JointLaw) -> f64 {
    let mut aux = key.stream(Lane::Auxiliary);
    sample_marginal(&mut aux, &joint.service)
}

/// Run `f` over replication ids `0..reps` and return results in id order.
///
/// `threads = None` uses the ambient pool; `Some(n)` builds a dedicated
/// pool of `n` workers. Output order never depends on scheduling.
pub fn map_replications<T, F>(reps: u64, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..reps).into_par_iter().map(&f).collect::<Vec<_>>();
        match threads {
            Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(run),
                Err(_) => run(),
            },
            _ => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (0..reps).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Patience;

    #[test]
    fn streams_reproduce() {
        let mut a = RandomStream::new(7, 3, Lane::Marks);
        let mut b = RandomStream::new(7, 3, Lane::Marks);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RandomStream::new(7, 3, Lane::Arrivals);
        let mut d = RandomStream::new(7, 4, Lane::Marks);
        let x = RandomStream::new(7, 3, Lane::Marks).next_u64();
        assert_ne!(x, c.next_u64());
        assert_ne!(x, d.next_u64());
    }

    #[test]
    fn uniform_is_open() {
        let mut s = RandomStream::new(1, 1, Lane::Auxiliary);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn zero_rate_yields_nothing() {
        let key = ReplicationKey::new(1, 0);
        let rate = RateFunction::constant_bounded(0.0, 1.0);
        let mut arr = key.stream(Lane::Arrivals);
        let mut acc = key.stream(Lane::Acceptance);
        assert_eq!(next_arrival(&mut arr, &mut acc, &rate, 0.0, 1e4).unwrap(), None);
        let zero = RateFunction::constant(0.0);
        assert_eq!(next_arrival(&mut arr, &mut acc, &zero, 0.0, 1e4).unwrap(), None);
        assert!(next_arrival(&mut arr, &mut acc, &zero, -1.0, 1.0).is_err());
    }

    #[test]
    fn peeked_candidate_is_not_lost() {
        let key = ReplicationKey::new(5, 9);
        let rate = RateFunction::constant(1.0);
        let joint = JointLaw::product(Marginal::Exponential { rate: 1.0 }, Patience::infinite());
        let mut all = CandidateStream::new(key, &rate, &joint);
        let reference: Vec<_> = (0..20).map(|_| all.next_candidate().unwrap()).collect();
        let mut split = CandidateStream::new(key, &rate, &joint);
        let mut got = Vec::new();
        let mut limit = 0.5;
        while got.len() < 20 {
            while let Some(c) = split.next_accepted(limit, false) {
                got.push(c);
            }
            limit += 0.5;
        }
        assert_eq!(&got[..20], &reference[..]);
    }

    #[test]
    fn geometric_has_support_from_one() {
        let mut s = RandomStream::new(2, 2, Lane::Auxiliary);
        let n = 100_000;
        let p = 0.3;
        let mut sum = 0.0;
        for _ in 0..n {
            let k = s.geometric(p);
            assert!(k >= 1);
            sum += k as f64;
        }
        let mean = sum / n as f64;
        let se = ((1.0 - p) / (p * p) / n as f64).sqrt();
        assert!((mean - 1.0 / p).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn replication_map_keeps_order() {
        let out = map_replications(1000, Some(4), |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, &v)| v == 2 * i as u64));
    }
}
