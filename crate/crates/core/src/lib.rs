//! Gradient-informed Bayesian optimization in high dimensions.
//!
//! The search loop fits a surrogate, estimates a gradient subspace from the
//! posterior mean, and maximizes an acquisition over candidates drawn inside
//! that subspace. See [`optimizer::run_gitbo`].

pub mod acquisition;
pub mod benchmarks;
pub mod bridge;
pub mod domain;
pub mod error;
pub mod optimizer;
pub mod sampling;
pub mod stats;
pub mod subspace;
pub mod surrogate;
pub mod trace_io;

pub use domain::{IterRecord, ObservationSet, PosteriorBatch, RunTrace, SearchDomain};
pub use error::{Error, Result};
