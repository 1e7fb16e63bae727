//! Separability-driven symbolic regression.
//!
//! A black-box target is probed for additive blocks and multiplicative
//! factors; each factor is modelled on its own (template library search or
//! genetic programming) and the factors are recombined by linear least
//! squares into one closed-form model.

pub mod error;
pub mod engines;
pub mod expr;
pub mod harness;
pub mod matrix;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod separability;
pub mod stats;

pub use error::{Error, Result};
pub use expr::{parse, Evaluation, Expression};
pub use matrix::Matrix;
pub use oracle::{ExprOracle, FnOracle, GuardedOracle, Oracle};
pub use scalar::Scalar;
pub use separability::{detect_structure, DetectionConfig, SeparableStructure};

/// Double-precision sample matrix.
pub type SampleMatrix = Matrix<f64>;
/// Double-precision domain box.
pub type Domain = sampling::DomainBox<f64>;
/// Double-precision sampling plan.
pub type Plan = sampling::SamplingPlan<f64>;
