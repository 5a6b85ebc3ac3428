//! Simulator and library for pilot-free predictive beamforming in a
//! cell-free massive MIMO network with integrated sensing.
//!
//! A moving user is tracked with an extended Kalman filter fed by
//! bistatic range/radial-velocity measurements whose noise follows the
//! Cramér-Rao bound of the OFDM sensing waveform. Sensing is triggered only
//! when the predicted angle error variance crosses a threshold, and the set
//! of receive APs is chosen to minimize that variance. Downlink precoders
//! are steered from the tracked position.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod crb;
pub mod error;
pub mod io;
pub mod model;
pub mod sensing;
pub mod sim;
pub mod tracking;

pub use error::{Error, Result};
