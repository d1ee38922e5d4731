//! Scalable Gaussian random fields on continuous spatial domains.
//!
//! The crate simulates and fits several constructions that approximate a
//! dense "parent" Gaussian process at linear cost in the number of
//! evaluation points:
//!
//! * sequential neighbour factorisations of a finite reference set
//!   (nearest-`m` and radius rules, [`sparse`]),
//! * the piecewise continuous GP, which keeps the full parent conditional
//!   law inside each cell of a domain partition ([`pcgp`]), and its
//!   boundary-smoothing mixture over shifted partitions,
//! * path functionals (integral, level-set fraction, extremes) and nested
//!   grid schedules used to probe how those functionals behave under
//!   refinement ([`functionals`]),
//! * closed-form profile maximum likelihood for the process mean and
//!   variance under either construction ([`inference`]).
//!
//! Everything is deterministic given a master seed: randomness flows through
//! hierarchical [`rng::StreamId`] substreams, so replications can run on any
//! number of threads (or in any order) without changing results.
//!
//! The [`experiments`] module drives the desk-scale numerical studies behind
//! the `sparse-field` CLI and writes CSV/JSON outputs.

pub mod covariance;
pub mod error;
pub mod experiments;
pub mod field;
pub mod functionals;
pub mod geometry;
pub mod inference;
pub mod pcgp;
pub mod rng;
pub mod sparse;

pub use covariance::{CovarianceModel, Kernel};
pub use error::{Error, Result};
pub use field::FieldModel;
pub use geometry::{Domain, GridStyle, Location, Partition};
pub use rng::StreamId;
pub use sparse::{NeighborRule, OrderingRule, ReferenceSet, SparseFactor};
