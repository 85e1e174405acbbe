//! Simulated-network laboratory for data-dependent distributed stochastic
//! optimization.
//!
//! Everything here runs on a single machine: "nodes" are rows of a state
//! matrix, "communication" is multiplication by a doubly stochastic weight
//! matrix, and every training scheme is a deterministic function of its
//! configuration and seed. The crate covers:
//!
//! * sparse dataset handling and synthetic generators ([`data`]),
//! * spectral estimation of the sample covariance and Monte Carlo statistics
//!   of sampled Gram submatrices ([`spectral`]),
//! * network topologies and doubly stochastic weight matrices ([`graph`]),
//! * fastest-mixing-chain optimization over a truncated permutation basis
//!   ([`fmmc`]),
//! * sequential / consensus / intermittent / mini-batch / one-shot SGD
//!   ([`sgd`]),
//! * experiment orchestration, reference optima and metrics ([`harness`]).
//!
//! With the default `parallel` feature, embarrassingly parallel inner loops
//! (Monte Carlo trials, per-node work, repetition sweeps) run on rayon.
//! All randomness is keyed by (seed, purpose, index) counters and results are
//! aggregated in a fixed order, so outputs are bit-identical for any worker
//! count, including the sequential fallback built with
//! `--no-default-features`.

pub mod cli;
pub mod data;
pub mod error;
pub mod fmmc;
pub mod graph;
pub mod harness;
pub mod loss;
pub mod par;
pub mod rng;
pub mod sgd;
pub mod spectral;

pub use data::Dataset;
pub use error::{Error, Result};
