//! Simulator and optimizer for multi-mode pinching-antenna downlink systems.
//!
//! A dielectric waveguide carries `M` orthogonal guided modes and feeds `N`
//! pinching antennas (PAs) placed along it. Each PA radiates a tunable
//! fraction of every mode's guided power, set by its position and its own
//! propagation constant. The crate models that physics ([`waveguide`]),
//! builds the spherical-wave user channels and the mode-domain effective
//! channel ([`channel`]), evaluates sum rate under a KKT-parameterized
//! beamforming family ([`precoder`]), and jointly optimizes PA positions,
//! propagation constants, and beamforming parameters with a hybrid
//! continuous/binary particle swarm ([`swarm`]). The operating protocols
//! (mode selection, mode combining, uniform combining) and the reference
//! baselines live in [`protocols`]; [`scenario`] holds the experiment
//! configuration shared with the `pass-bench` CLI.

pub mod channel;
pub mod error;
pub mod precoder;
pub mod protocols;
pub mod scenario;
pub mod swarm;
pub mod waveguide;

pub use error::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex scalar used throughout the crate.
pub type C64 = nalgebra::Complex<f64>;
