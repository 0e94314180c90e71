//! Hypercuboid coded distributed computing.
//!
//! * [`design`] builds node sets, node groups, file mappings and function
//!   assignments from a [`NetworkSpec`].
//! * [`engine`] synthesizes input files and runs the Map and Reduce phases.
//! * [`shuffle`] runs the coded multicast shuffle, the uncoded baseline and
//!   decoding.
//! * [`analysis`] evaluates loads, counts and bounds in exact arithmetic.
//! * [`simulation`] drives a full run and checks it against the oracle.

pub mod analysis;
pub mod cli;
pub mod design;
pub mod engine;
pub mod shuffle;
pub mod simulation;

pub use design::{build_design, Design, NetworkSpec, NodeClass};
