//! Differentially private top-k selection on beta-Bernoulli hard instances,
//! together with the fingerprinting statistic that bounds how accurate such
//! selection can be at a given sample size.
//!
//! Module map:
//! - [`beta`]: beta function, density, distribution function, sampler, tail bounds
//! - [`instance`]: populations, binary datasets, top-k references
//! - [`mechanisms`]: exponential-mechanism peeling, report-noisy-max, sparse vector,
//!   Gaussian mean release, non-private baselines
//! - [`fingerprint`]: the `Z` statistic, its privacy and accuracy bounds, exact
//!   fingerprinting identities, membership tracing
//! - [`container`]: binary replay format for populations and datasets

pub mod beta;
pub mod container;
pub mod error;
pub mod fingerprint;
pub mod instance;
pub mod mechanisms;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
