//! Deployment authorisation engine: evidence in, signed licence to operate out.
//!
//! The pipeline runs evidence sufficiency, scoring, gating and condition
//! derivation against a versioned jurisdictional policy, records the result in
//! a hashed audit package, and publishes certificates and revocations to an
//! append-only Merkle log.

pub mod canonical;
pub mod certification;
pub mod decision;
pub mod evidence;
pub mod hash;
pub mod model;
pub mod policy;
pub mod scoring;
pub mod translog;

pub use hash::ContentHash;
pub use model::{Dimension, DimensionScore, PerDimension, ScoreVector, SCALE_MAX};
