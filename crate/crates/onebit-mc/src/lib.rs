//! One-bit matrix completion under differential privacy.
//!
//! The library recovers a low-rank matrix from binary observations by
//! constrained maximum likelihood (a spectral projected gradient solver over
//! the intersection of a nuclear-norm ball and an entrywise box) and offers
//! four epsilon-differentially-private variants of the pipeline: randomized
//! response on the inputs, a Laplace-perturbed objective, noisy clamped
//! gradient steps, and Laplace noise on the released completion.

pub mod constraints;
pub mod data;
pub mod dp;
pub mod error;
pub mod likelihood;
pub mod link;
pub mod mechanisms;
pub mod metrics;
pub mod observations;
pub mod rng;
pub mod solver;

pub use constraints::{ConstraintSet, ProjectionKind, ProjectionParams};
pub use data::{GroundTruth, RatingsTable, ScaleRule};
pub use dp::{Composition, Mechanism, PrivacySpec};
pub use error::{Error, Result};
pub use likelihood::NoiseMatrix;
pub use link::{LinkKind, LinkModel, ModelConstants, PerturbedLink};
pub use mechanisms::RunConfig;
pub use metrics::{BoundConstants, MetricReport, Theorem};
pub use observations::{Observation, ObservationSet};
pub use rng::RngHandle;
pub use solver::{IterationRecord, SolverParams, SolverResult};
