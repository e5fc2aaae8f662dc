//! Mastery-learning simulation with fast-forwarding.
//!
//! Simulated students (Additive Factors Model) work through multi-step
//! problems chosen by one of five selection policies, while the tutor tracks
//! mastery with Bayesian Knowledge Tracing. Fast-forwarding ends a problem
//! once every remaining step exercises a mastered skill. The crate measures
//! how much practice happens after mastery (overpractice) and how many skills
//! remain unmastered (underpractice) under each policy.

pub mod afm;
pub mod bkt;
pub mod config;
pub mod error;
pub mod fit;
pub mod metrics;
pub mod rng;
pub mod runner;
pub mod selectors;
pub mod session;
pub mod skills;

pub use error::{Error, Result};
