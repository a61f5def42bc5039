//! Path synthesis from recorded navigation traces and overfit/underfit
//! evaluation of the synthetic output.
//!
//! The generation pipeline maps each dimension of a trace to IID standard
//! normal residuals through a model-free transform ([`mf`]), couples the
//! dimensions with a Gaussian copula ([`copula`]), splits traces whose
//! cross-correlation drifts ([`segment`]) and runs everything end to end in
//! [`generate`]. [`three_sample`] scores generated traces against a
//! training set and a held-out set.

pub mod copula;
pub mod demo;
mod error;
pub mod generate;
pub mod mf;
pub mod normal;
pub mod segment;
pub mod three_sample;
pub mod trace;

pub use nalgebra;

pub use copula::{CopulaModel, TargetCorrelation};
pub use error::{Error, ErrorKind, Result};
pub use generate::{generate, GenerationParams, GenerationReport};
pub use mf::{LocalCdf, MfModel, TemporalCovariance};
pub use segment::SegmentationPlan;
pub use three_sample::{EmbeddedCloud, ThreeSampleReport};
pub use trace::{PathTrace, ResidualMatrix, RngSpec, TraceWarning};
