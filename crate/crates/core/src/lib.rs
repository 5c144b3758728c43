//! Scene-text dataset toolkit: record types, polygon geometry, cropping,
//! consensus harvesting, corpus refinement, difficulty voting, metrics and
//! benchmark assembly.

pub mod benchmark;
pub mod consolidate;
pub mod difficulty;
pub mod geometry;
pub mod imaging;
pub mod manifest;
pub mod metrics;
pub mod voting;
