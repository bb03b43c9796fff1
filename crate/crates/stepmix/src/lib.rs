//! Model-based clustering of stepwise-decreasing intensity profiles.
//!
//! Profiles (e.g. single-molecule photobleaching traces) are classified into
//! four structural clusters — no jump, one jump of height `delta`, two jumps
//! of `delta`, or one jump of `2*delta` — via a Gaussian mixture whose jump
//! height is shared across profiles and clusters. Inference runs an ECM
//! algorithm with an exhaustive constrained change-point search; precision
//! comes from the expected complete-data information matrix, and a
//! closed-form oracle gives the probability of confusing the two dimer
//! clusters.

pub mod ecm;
pub mod error;
pub mod fisher;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod theory;

pub(crate) mod seeding;

pub use error::{Error, Result};
pub use model::{Cluster, MixtureParams, Profile, ProfileParams, Responsibilities, Segmentation};
