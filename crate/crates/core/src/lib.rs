//! Differentially private sparse histograms with exact, bit-level samplers.

pub mod alias;
pub mod error;
pub mod histogram;
pub mod numerics;
pub mod rng;
pub mod sampler;
pub mod sort;
pub mod unbounded;
pub mod verify;

pub use error::{Error, Result};
pub use histogram::{
    build_histogram, release, release_dense, AbortMode, Dataset, HistMechanism, HistParams,
    Release, SparseHistogram,
};
pub use numerics::{FixedProb, RationalParam};
pub use rng::{BitSource, SourceMode, Stream};
pub use sampler::{DLapSampler, NoiseMechanism};
pub use unbounded::{release_unbounded, UnboundedParams, UnboundedRelease, UpperBoundSearch};
