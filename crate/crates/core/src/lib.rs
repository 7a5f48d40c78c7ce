//! Parameter-free SGD step-size tuning by log-scale bisection.

pub mod domain;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod restart;
pub mod rng;
pub mod sgd;
pub mod tuner;
pub mod validation;

pub use domain::ProjectionDomain;
pub use oracle::{GradientOracle, Optimum};
pub use rng::StreamId;
pub use sgd::{sgd_run, SgdOptions, SgdTrace};
pub use tuner::{tune, StepSizeExp, TuneCase, TuneConfig, TuneError, TuneMode, TunerResult};
