//! navlab: coherent geometries, budget-constrained maximum-entropy graph
//! ensembles, and greedy decentralized routing, at desk scale.
//!
//! The crate is organized around five subsystems:
//!
//! - [`geometry`]: vertex sets with semi-metrics, distance scales, substrates,
//!   and empirical coherence verification;
//! - [`setsystem`]: Kleinberg-style set systems, their induced metric, and the
//!   axioms under which they are coherent geometries;
//! - [`measure`]: the constrained entropy maximization over edge profiles, its
//!   budget inverse, and the sandwich/threshold parameters;
//! - [`sampler`]: product-measure, rank-based-augmentation, and exact
//!   bounded-cost edge samplers with a common seeded-RNG contract;
//! - [`routing`]: greedy decentralized routing and the reducibility probe.
//!
//! The `navlab` binary (see [`harness`]) exposes the experiment pipeline.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod measure;
pub mod routing;
pub mod sampler;
pub mod setsystem;

pub use error::{NavError, Result};
pub use geometry::{build_substrate, CoherenceReport, Geometry, Substrate, VertexId};
