//! Trajectory-commitment laboratory.
//!
//! A small decoder-only transformer engine with residual-stream hooks, a
//! family of planted "fork-and-commit" models with exact oracles, and the
//! experiment kernels built on top of them: bifurcation counting,
//! divergence analysis, activation patching sweeps and step-0 regime probes.

pub mod dataset;
pub mod fixtures;
pub mod model;
pub mod phase1;
pub mod phase2;
pub mod phase3;
pub mod probe;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod trace;
pub mod vocab;



pub use model::{Engine, HookPoint, HookSpec, Intervention, ModelConfig, Weights};
pub use dataset::{Category, Label, PromptSpec};
