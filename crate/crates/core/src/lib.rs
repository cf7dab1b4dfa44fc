//! Simulation and stochastic-bound toolkit for single-server queues with a
//! time-varying Poisson arrival rate, workload-based balking and jointly
//! distributed service/patience times.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: rate functions, joint service/patience laws, cost functions
//!   and queue specifications, with validation.
//! - [`streams`]: replication-addressable random streams and Poisson
//!   thinning.
//! - [`sim`]: the event-driven simulator (FCFS and LCFS-PR with a finite
//!   waiting room), busy periods, regenerative cycles, horizons and the
//!   long-idle decomposition.
//! - [`coupling`]: shared-randomness constructions (rate thinning, room
//!   ladders) and replication batches.
//! - [`stats`]: empirical distributions, one-sided dominance tests, moment
//!   and ratio estimators.
//! - [`bounds`]: stability reports, geometric decompounding, the
//!   geometric-sum Monte Carlo bounds, tail diagnostics and classical
//!   M/G/1 oracles.

pub mod bounds;
pub mod coupling;
pub mod model;
pub mod sim;
pub mod stats;
pub mod streams;

pub use model::{
    CostFunction, CostKind, Discipline, Init, JointKind, JointLaw, Marginal, Patience,
    QueueSpec, RateFunction, RateKind, Room, RunKind, ValidSpec,
};
pub use sim::{Caps, FunctionalSample, SimError, SimOptions, WorkloadPath};
pub use streams::{Lane, RandomStream, ReplicationKey};
