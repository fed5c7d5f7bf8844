//! Physics-informed Gaussian-process modelling of guided-wave feature fields.
//!
//! The crate models two-dimensional maps of a wave-packet energy feature over
//! a plate. It provides:
//!
//! * polar-coordinate geometry and circular distance measures ([`geometry`]);
//! * a catalog of composable covariance functions, from generic smooth
//!   kernels to attenuation-informed polar designs ([`kernels`]);
//! * conjugate Bayesian linear regression of one-dimensional log-amplitude
//!   attenuation ([`blr`]);
//! * exact Gaussian-process fitting, prediction and marginal likelihood,
//!   with optional attenuation mean functions ([`gp`]);
//! * the six standard modelling strategies A-F binding mean, kernel and
//!   input space ([`strategy`]);
//! * gradient-free hyperparameter search with a quantum-behaved particle
//!   swarm ([`optimize`]);
//! * probabilistic evaluation metrics and data splitting ([`metrics`]);
//! * synthetic feature-field generation and waveform feature extraction for
//!   end-to-end recovery experiments ([`synth`]).

pub mod blr;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod kernels;
pub mod metrics;
pub mod optimize;
pub mod strategy;
pub mod synth;

pub use error::{Error, Result};
