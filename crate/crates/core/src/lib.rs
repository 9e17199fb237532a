//! Digital-twin emulation of LEO satellite networks.
//!
//! The pipeline runs constellation propagation → per-slot topology →
//! physical-layer link capacity → pluggable path computation → a
//! deterministic packet-level event engine, driven by scenario files through
//! the [`gateway`] control plane.

// NaN must fail validation, which `!(x > 0.0)` expresses directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constellation;
pub mod engine;
pub mod gateway;
pub mod pathcomp;
pub mod phy;
pub mod time;
pub mod topology;
