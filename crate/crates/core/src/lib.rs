//! Channel-matrix conditioning in a synthetic reverberant room.
//!
//! A seeded virtual room maps binary unit configurations to complex channel
//! matrices; scalar objectives built from effective rank and diagonalization
//! degree are minimized by a random-flip climbing optimizer and compared
//! against random-matrix baselines.

pub mod acoustics;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod quad;
pub mod rmt;
pub mod rng;
pub mod room;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};
