//! Dipolar relaxation in magnetically trapped, spin-polarized atomic gases.
//!
//! The crate covers the whole chain from a two-body spin-flip cross section to
//! a number you can compare with a trap-loss measurement:
//!
//! - [`units`]: CODATA constants and laboratory-unit conversion.
//! - [`channels`]: species presets, Zeeman splitting and the 0/1/2 spin-flip
//!   exit channels.
//! - [`born`]: orientation-averaged Born cross sections and the exchange
//!   ratio `h(x)`.
//! - [`thermal`]: Maxwell-Boltzmann averaged rate coefficients.
//! - [`dynamics`]: rate-equation evolution of sublevel populations and
//!   temperature in a harmonic trap.
//! - [`estimate`]: least-squares recovery of rate constants from time series.
//! - [`io`]: run configuration files and the CSV time-series format.
//!
//! All internal quantities are SI. Laboratory units only appear at the I/O
//! boundary.
//!
//! ```
//! use dipolar::{channels::Species, thermal::{self, ThermalConditions}, units::Unit};
//!
//! let cr = Species::cr52();
//! let cond = ThermalConditions::new(Unit::MicroKelvin.to_si(275.0), Unit::Gauss.to_si(27.0))?;
//! let beta_event = thermal::beta_event_rate(&cr, &cond)?;
//! let cm3s = Unit::CubicCentimetrePerSecond.from_si(beta_event).value;
//! assert!(cm3s > 1.2e-11 && cm3s < 5.6e-11);
//! # Ok::<(), dipolar::Error>(())
//! ```

// `!(x >= 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Quadrature tables keep the digits of their published source.
#![allow(clippy::excessive_precision)]

pub mod born;
pub mod channels;
pub mod dynamics;
mod error;
pub mod estimate;
pub mod io;
pub mod ode;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod quadrature;
pub mod thermal;
pub mod units;

pub use error::{Error, Result};

// Book chapters are compiled as doctests so the guide cannot drift from the
// library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/units.md")]
    mod units {}
    #[doc = include_str!("../../../book/src/cross-sections.md")]
    mod cross_sections {}
    #[doc = include_str!("../../../book/src/thermal-averaging.md")]
    mod thermal_averaging {}
    #[doc = include_str!("../../../book/src/cloud-dynamics.md")]
    mod cloud_dynamics {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
