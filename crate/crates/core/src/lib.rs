//! Simulation and analysis toolkit for qubit readout through a bandpass
//! Purcell filter.
//!
//! The crate is organised by physical model:
//!
//! - [`params`]: device parameters, unit conventions, configuration documents
//!   and presets.
//! - [`semiclassical`]: classical field dynamics of the readout and filter
//!   resonators, effective linewidths and the suppression factor.
//! - [`singlex`]: Purcell rates in the single-excitation subspace, from the
//!   exact characteristic cubic down to the quasisteady formulas.
//! - [`driven`]: full Lindblad evolution of a driven two-level qubit coupled to
//!   both resonators, and extraction of the drive-dependent Purcell rate.
//! - [`dispersive`]: dispersive shifts, photon-number dependent rates and the
//!   measurement error budget of the unfiltered setup.
//!
//! Internally every angular frequency is in rad/ns and every time in ns.

pub mod error;
pub mod units;

pub mod fit;
pub mod ode;
pub mod roots;

pub mod params;

pub mod dispersive;
pub mod driven;
pub mod semiclassical;
pub mod singlex;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use params::{DerivedQuantities, DeviceParams, DriveConfig, DrivePort, Envelope};
