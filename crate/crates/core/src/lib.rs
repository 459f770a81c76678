//! Dynamical optimal transport on the real line, computed exactly on
//! finitely supported measures.
//!
//! The crate is organised bottom-up:
//!
//! - [`measure`]: atomic probability measures, quantiles, stochastic order,
//!   the 2-Wasserstein distance and the quantile (comonotone) coupling.
//! - [`coupling`]: transport plans, kernels, products, concatenation and the
//!   lower orthant order.
//! - [`curve`]: curves `t -> mu_t` given by a quantile surface `G(t, alpha)`,
//!   time partitions, energy and length functionals.
//! - [`process`]: laws of processes on finite time grids and the operation of
//!   making a law Markov at a set of times.
//! - [`markov_quantile`]: the quantile process, its Markovizations and the
//!   Markov-quantile couplings obtained as limits of products of quantile
//!   couplings.
//! - [`dynamics`]: action, displacement-interpolating laws, velocity fields and
//!   continuity-equation residuals.
//! - [`oracle`]: brute-force ground truth used by the test suites.
//! - [`cli`] and [`verify`]: file formats, commands and named verification
//!   suites behind the `mqdyn` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupling;
pub mod curve;
pub mod dynamics;
pub mod markov_quantile;
pub mod measure;
pub mod oracle;
pub mod process;
pub mod verify;

mod error;

pub use coupling::{Coupling, Kernel, TripleLaw};
pub use curve::{CurveKind, EnergyReport, MarginalCurve, TimePartition};
pub use dynamics::{TestFunction, VelocityField};
pub use error::{Error, Result};
pub use markov_quantile::{MqConfig, MqOutcome, PathSample};
pub use measure::{AtomicMeasure, QuantileFunction};
pub use process::{GridPathLaw, Interpolation, JointLaw, LawOrigin};

/// Absolute tolerance on probability masses and CDF values.
pub const MASS_TOL: f64 = 1e-12;

/// Positions closer than this are treated as the same atom.
pub const POSITION_TOL: f64 = 1e-12;

/// Masses below this are rejected by constructors and dropped by internal
/// arithmetic.
pub const MIN_MASS: f64 = 1e-15;
