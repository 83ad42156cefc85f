//! Kernel-localized estimators of a causal dose-response curve `m(t)` and its
//! derivative effect curve `theta(t)` for a continuous treatment.

pub mod data;
pub mod error;
pub mod kernels;
pub mod nuisance;
pub mod quadrature;

pub use data::{DrForm, EstimationConfig, EvalGrid, ObservationSet, WeightPoint};
pub use error::{Error, Result};
pub use kernels::{Bandwidth, BandwidthRule, Kernel};
pub mod crossfit;
pub mod estimators;
pub mod rng;
pub mod sim;
