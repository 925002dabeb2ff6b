//! Desk-scale simulator for personalized, user-level differentially private
//! federated SGD on additive linear models.
//!
//! Every user predicts with `(w + theta_i) . x`, where `w` is learned
//! jointly under Gaussian-noised, clipped aggregation and each `theta_i`
//! stays on its client. The crate provides:
//!
//! * the model, clipping, and joint-iterate bookkeeping ([`model`]),
//! * synthetic and CSV-backed per-user data sources ([`data`]),
//! * the shared training engine with full, Bernoulli, and fixed-size client
//!   participation ([`optimizer`]),
//! * Renyi-DP accounting and noise calibration ([`privacy`]),
//! * closed-form excess-risk bounds and the personalization threshold
//!   ([`theory`]),
//! * a sweep harness with deterministic CSV output ([`harness`]).
//!
//! Reproducibility is a hard contract: every random decision comes from a
//! named substream of one master seed, so reruns and different thread
//! counts produce byte-identical results.

pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod privacy;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
