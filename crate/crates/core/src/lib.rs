//! Bayesian estimation of D-vine copula time-series models with discrete,
//! continuous or mixed margins.
//!
//! The main estimator is variational Bayes on the data-augmented posterior
//! ([`vbda`]); an exact MCMC data-augmentation sampler ([`mcmc`]) serves as a
//! baseline. [`analysis`] turns either posterior into Spearman dependence
//! summaries and predictive draws.

pub mod analysis;
pub mod data;
pub mod dgp;
pub mod dvine;
pub mod error;
pub mod margins;
pub mod mcmc;
pub mod paircopula;
pub mod parallel;
pub mod quad;
pub mod rng;
pub mod special;
pub mod vbda;

pub use error::{Error, Result};

/// Library version; saved results from other versions are rejected on load.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
