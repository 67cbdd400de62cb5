//! Graph edit distance (GED) toolkit built around diffusion-based node matching.
//!
//! The solver samples `k` binary node-matching matrices, denoises each one with
//! a learned network over a small number of reverse diffusion steps, extracts
//! one injective node mapping per matrix, and keeps the mapping whose induced
//! edit path is cheapest. Every reported GED is therefore witnessed by a
//! replayable edit script and can never undercut the true distance.
//!
//! The crate also ships the pieces needed to study the solver end to end:
//! exact brute-force and A* oracles for small graphs, a synthetic pair
//! generator with known edit costs, classical greedy/Hungarian extraction
//! baselines, training for the denoising network, ranking metrics, and a CLI.

// Index loops over node/channel/chain ranges mirror the math; iterator
// rewrites obscure which axis is walked.
#![allow(clippy::needless_range_loop)]

pub mod dataset;
pub mod denoiser;
pub mod diffusion;
pub mod edit_path;
pub mod error;
pub mod extraction;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod synthetic;
pub mod training;

mod cli;
mod tensor;

pub use cli::run_cli;
pub use error::{Error, Result};
