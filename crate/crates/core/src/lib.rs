//! Support-boundary models with local asymptotic exponentiality.
//!
//! The crate covers the three observation models (a parametric shifted
//! exponential, a semiparametric location model and a semiparametric scale
//! model), the Esscher-transform nuisance spaces that parametrize them,
//! Brownian-path priors on score functions, nuisance-integrated marginal
//! posteriors for the boundary parameter and the Hellinger/Kullback-Leibler
//! machinery used to check the geometry of the models numerically.
//!
//! Everything here is pure computation over immutable inputs and builds with
//! `no_std` + `alloc`. File formats, the experiment runner and the CLI live in
//! the `laebvm` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod interp;
pub mod metrics;
pub mod models;
pub mod nuisance;
pub mod posterior;
pub mod priors;
pub mod quad;
pub mod seed;
pub mod stats;

pub use models::{Dataset, LaeQuantities, ModelKind, ModelSpec, Remainder};
pub use nuisance::{DensityKind, Domain, NuisanceDensity, ScoreFunction};
pub use posterior::{ExpLimit, GridConfig, Orientation, PosteriorGrid};
pub use priors::{ScorePriorSampler, ScorePriorVariant, ThetaPrior};


