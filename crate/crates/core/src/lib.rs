//! Simulation, estimation and control toolkit for a quadrotor carrying a
//! delta arm: payload inertia pre-sensing and online mass adaptation,
//! inertia-aware gain scheduling of the angular-rate loop, and the
//! frequency-domain analysis of that loop.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
// Index loops over parallel per-axis arrays stay as index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptation;
pub mod controller;
pub mod delta;
pub mod dynamics;
pub mod freqdom;
pub mod harness;
pub mod presense;
pub mod spatial;
