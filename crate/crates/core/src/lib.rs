//! Discrete graph diffusion over categorical node/edge types, with a
//! trigger-pinned backdoored chain next to the clean one.
//!
//! The crate is organized around the pipeline:
//!
//! * [`graph`] — one-hot graphs, permutations, trigger injection, canonical
//!   hashing, valence rules.
//! * [`schedule`] — retention schedules and the `alpha*I + (1-alpha)*1 m'`
//!   transition matrices for both chains.
//! * [`diffusion`] — closed-form forward marginals, noisy sampling, and the
//!   true posteriors used by the reverse process.
//! * [`denoiser`] — a small permutation-equivariant graph transformer with
//!   tape-based reverse-mode gradients.
//! * [`training`] — corpus poisoning, the joint clean+backdoored objective,
//!   the optimizer loop, and finetuning defenses.
//! * [`sampling`] — prior draws from either limit distribution and the
//!   ancestral reverse loop.
//! * [`metrics`] — validity/uniqueness/attack-success scoring, exact graph
//!   edit distance, spectral distance, and the structural-similarity detector.

pub mod autodiff;
pub mod denoiser;
pub mod diffusion;
pub mod graph;
pub mod metrics;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod training;

pub use graph::{Graph, GraphError, SoftGraph, TriggerMasks, TriggerSpec, ValenceTable};
pub use schedule::{LimitDistributions, NoiseSchedule, ScheduleError, TransitionMatrix};
