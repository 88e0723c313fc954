//! Differentially private publishing of a path through a network as a
//! layered graph.
//!
//! The pipeline is: ring removal and duplicate injection
//! ([`preprocess::preprocess_vertices`]), non-edge randomization
//! ([`preprocess::preprocess_edges`]), layered-graph construction
//! ([`publish::publish`]), and reconstruction by parties that know the full
//! network ([`recover::reconstruct_path`]).

pub mod dp;
pub mod graph;
pub mod harness;
pub mod preprocess;
pub mod publish;
pub mod recover;
pub mod rng;
