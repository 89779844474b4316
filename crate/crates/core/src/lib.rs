//! Coverage probability and area spectral efficiency of dense small-cell
//! networks under proportional-fair and round-robin scheduling.
//!
//! The analytic engine ([`coverage`], [`ase`]) evaluates the stochastic
//! geometry expressions by adaptive quadrature; [`mcsim`] is an independent
//! Monte Carlo oracle for the same quantities.

pub mod ase;
pub mod coverage;
pub mod error;
pub mod fading;
pub mod mcsim;
pub mod netmodel;
pub mod pathloss;
pub mod quadrature;
pub mod units;
pub mod validation;

pub use error::{Error, Result};
pub use fading::{FadingKind, SchedulerKind};
pub use netmodel::{NetworkConfig, UeCountDistribution};
pub use pathloss::{Branch, PathLossModel};
