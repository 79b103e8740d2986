//! Quality-diversity optimization with approximated gradients.
//!
//! The crate implements grid-archive QD search where a coefficient-space
//! CMA-ES steers branching along objective and measure gradients. Gradients
//! come from mirrored-sampling evolution strategies, from a TD3 critic, or
//! exactly from an analytic benchmark. Baseline schedulers (MAP-Elites, the
//! policy-gradient-assisted variant, and the explore-exploit ES variant)
//! share the same archive, environments, and experiment harness.
//!
//! Everything is deterministic under a fixed seed: randomness flows through
//! [`rng::RngStream`] instances keyed by `(seed, purpose)`, and parallel
//! evaluation assigns each evaluation its own stream by global index.

pub mod algorithms;
pub mod archive;
pub mod cma;
pub mod envs;
pub mod error;
pub mod es_grad;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod td3;
pub mod types;
pub mod vecmath;

pub use archive::{Archive, ArchiveCell, GridSpec, InsertOutcome, InsertStatus};
pub use error::{QdError, Result};
pub use rng::RngStream;
pub use types::{Evaluation, GradientBundle, SolutionVector, Transition};
