//! Numerical transfer-operator toolkit for limit theorems of one-dimensional maps.

// `!(x > 0.0)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decay;
pub mod error;
pub mod function_space;
pub mod gordin;
pub mod maps;
pub mod montecarlo;
pub mod observable;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
pub use function_space::{DensityKind, DensityLaw, GridFunction, MeasureDensity, Norm, QuadratureGrid};
pub use maps::{IntervalMap, MapFamily, Preimage};
pub use transfer::{Backend, KoopmanOperator, TransferOperator, UlamMatrix};
