//! Shape-adaptive downlink beamforming over multiple reconfigurable
//! holographic surfaces (RHS).
//!
//! An access point with `N_tr` antennas serves `K` single-antenna users
//! exclusively through `S` passive surfaces. Each surface activates a subset
//! of its `M` elements according to a binary shape mask drawn from a small
//! catalog and applies unit-modulus phase shifts. The crate jointly picks the
//! mask, the AP precoder and the surface phases to maximize the weighted sum
//! rate, by alternating optimization over fractional-programming transforms:
//!
//! * [`channel`] draws network geometry, path loss and Rayleigh channels.
//! * [`shapes`] builds mask catalogs and performs exhaustive shape selection.
//! * [`active`] updates the precoder in closed form with a bisected power
//!   multiplier.
//! * [`passive`] solves the unit-modulus quadratic program for the phases.
//! * [`ao`] drives the outer loop and evaluates rates.
//! * [`baselines`] holds the fixed-shape, quantized-phase and zero-forcing
//!   comparison schemes.
//! * [`harness`] parses sweep configurations, runs seeded Monte Carlo trials
//!   and writes CSV results.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod ao;
pub mod baselines;
pub mod channel;
mod error;
pub mod harness;
pub mod passive;
pub mod rng;
pub mod shapes;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub use active::{Coupling, EffectiveChannels, Precoder};
pub use ao::{AoConfig, AoSolution, AuxState};
pub use baselines::BaselineKind;
pub use channel::{ChannelSet, Dims, NetworkLayout, PathLossModel};
pub use error::{Error, Result};
pub use passive::{PhaseConfig, QuadraticForm};
pub use shapes::{ShapeCatalog, ShapeKind, ShapeMask};

/// Complex column vector.
pub type CVector = DVector<Complex64>;
/// Complex dense matrix.
pub type CMatrix = DMatrix<Complex64>;
