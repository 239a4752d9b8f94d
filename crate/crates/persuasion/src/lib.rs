//! Solvers for Bayesian persuasion when the sender can query an oracle
//! about the receiver's belief.
//!
//! The sender faces a receiver whose prior over world states is unknown;
//! a second-order prior describes the population of possible receiver
//! types. Before committing to a messaging policy the sender may pose
//! partition or simulation queries that narrow down the receiver's type.
//! This crate provides:
//!
//! - core domain types and incentive-compatibility primitives ([`model`]),
//! - optimal messaging policies for a known type subset, both the general
//!   menu linear program and the two-state closed form ([`messaging`]),
//! - query geometry: induced partitions, separating-query search, and
//!   feasible-subset enumeration ([`oracle`]),
//! - optimal adaptive query planning by backward induction ([`adaptive`]),
//! - non-adaptive planning: interval dynamic programs, greedy selection,
//!   a set-cover hardness reduction, and counterexample generators
//!   ([`nonadaptive`]),
//! - query commitment, where the query may depend on the realized state
//!   ([`commitment`]).
//!
//! All types are immutable after construction and every operation is a
//! pure function of its inputs, so everything here is safe to share and
//! call across threads.

pub mod adaptive;
pub mod commitment;
pub mod linprog;
pub mod messaging;
pub mod model;
pub mod nonadaptive;
pub mod oracle;

pub use model::{BPInstance, Belief, MessagingPolicy, ModelError, TypeSubset};
pub use oracle::{PartitionQuery, SimulationQuery};
