//! Simulation toolkit for two-tone holonomic entangling operations between
//! two transmons coupled through a bus resonator.
//!
//! Subsystem order is qubit 1, qubit 2, resonator, with row-major tensor
//! indices (qubit 1 slowest). Angular frequencies are in rad/s, times in s.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod holonomy;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod pulse;
pub mod quantum;
pub mod tomography;

pub use error::{Error, Result};
