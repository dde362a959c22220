//! Kinetic models of tumour growth under parametric uncertainty.
//!
//! The crate provides
//!
//! - the transition law, its microscopic ODE limits and closed-form
//!   equilibria ([`growth`]),
//! - orthonormal polynomial chaos and Gauss quadrature ([`basis`], [`uq`]),
//! - a stochastic Galerkin Fokker-Planck solver ([`sg`]),
//! - a particle (DSMC) simulator with stochastic collocation ([`dsmc`]),
//! - feedback therapy controls ([`control`]),
//! - parameter estimation from volume time series ([`calibration`]),
//! - observables and verification helpers ([`analysis`]).
//!
//! Volumes are in scaled units where 1.0 corresponds to 1e5 mm^3.

pub mod analysis;
pub mod basis;
pub mod calibration;
pub mod control;
pub mod dsmc;
pub mod error;
pub mod growth;
pub mod numeric;
pub mod sg;
pub mod uq;

pub use error::{Error, Result};
