//! Stein particle filter: particle transport by a preconditioned Stein
//! variational flow, with a bootstrap particle filter baseline and the
//! experiment harness used to compare them.

pub mod error;
pub mod experiment;
pub mod filters;
pub mod kernels;
pub mod metrics;
pub mod models;
pub mod optimizers;
pub mod particles;
pub mod rng;
pub mod steinflow;

pub use error::{Error, Result};
pub use filters::{filter_step, FilterConfig, FilterState};
pub use particles::{ControlInput, Observation, ParticleSet, StateVector};
pub use rng::{Purpose, RngStream};
