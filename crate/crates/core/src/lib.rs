//! Behavioral model of the sub-threshold 8T SRAM read path.
//!
//! The crate is layered bottom-up:
//!
//! - [`device`]: weak-inversion drain current and the per-cell leakage and
//!   read currents derived from it.
//! - [`column`]: column leakage, closed-form discharge delays and the safety
//!   sensing window.
//! - [`discharge`]: time-domain bitline integration, the oracle for the
//!   closed forms.
//! - [`variation`] and [`rng`]: counter-addressed threshold mismatch and Monte
//!   Carlo statistics.
//! - [`peripherals`]: replica-column clock generator and the offset-cancelled
//!   sense amplifier.
//! - [`calibration`]: test-mode leakage counting and the `c_L → c_R` lookup
//!   table.
//! - [`read_sim`]: transaction-level bank reads under mismatch.
//! - [`config`] and [`report`]: run configuration and file formats used by
//!   the `leaksense` binary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod column;
pub mod config;
pub mod device;
pub mod discharge;
pub mod error;
pub mod peripherals;
pub mod read_sim;
pub mod report;
pub mod rng;
pub mod variation;

pub use error::{Error, Result};
