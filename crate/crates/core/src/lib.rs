//! Simulation and analysis toolkit for a photon-counting fiber-optic Sagnac
//! gyroscope.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: click probabilities, Fisher information, Cramér–Rao bound and
//!   the modulator voltage → delay map.
//! * [`geometry`]: coil geometry, Sagnac rotation ↔ delay conversion and the
//!   delay-per-area figure of merit.
//! * [`sim`]: seeded Monte Carlo generation of photon-count series and
//!   bright-source fringe scans.
//! * [`calibration`]: fringe fitting, inflection/α extraction, normalized
//!   contrast and the linear delay calibration.
//! * [`stability`]: overlapping Allan deviation, even/odd differential
//!   analysis, detection limits and Cramér–Rao overlays.
//! * [`config`] and [`io`]: experiment configuration and file formats used by
//!   the `sagnac` command-line tool.

pub mod calibration;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod model;
pub mod prototype;
pub mod sim;
pub mod stability;
pub mod units;

pub use error::{Error, Result};
