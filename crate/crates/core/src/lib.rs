//! Packet-header time series, delay embedding and signature scanning.
//!
//! The pipeline reads classic pcap captures, turns static header parameters
//! into equal-interval series, reconstructs their phase-space trajectories,
//! scores occupancy deviation against a baseline, and runs a catalog of
//! known-attack signatures over the same stream.

pub mod capture;
pub mod embedding;
pub mod multiwindow;
pub mod parameters;
pub mod signatures;
pub mod synthgen;
pub mod trajectory;
