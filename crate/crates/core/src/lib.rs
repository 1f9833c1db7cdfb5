//! Multifractal analysis of Gibbs measures on self-conformal subsets of the
//! line: pressure, the β(q) scaling function and its Legendre transform,
//! distribution-function evaluation, pointwise Hölder exponents, and the
//! cylinder constructions behind the non-differentiability results.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod holder_lab;
pub mod ifs_geometry;
pub mod numerics;
pub mod spectrum;
pub mod symbolic;
pub mod thermodynamics;

pub use error::{Error, Result};
pub use estimators::{CdfValue, DepthPolicy, DistributionFunction};
pub use ifs_geometry::{IfsSystem, Interval, MapKind, Mobius};
pub use spectrum::{SpectrumConfig, SpectrumCurve};
pub use symbolic::{PeriodicWord, Sequence, Word};
pub use thermodynamics::Potential;
