//! Benchmark harness around `pass-core`: scenario files, protocol sweeps,
//! and plot-ready CSV emission.

pub mod config;
pub mod sweep;
