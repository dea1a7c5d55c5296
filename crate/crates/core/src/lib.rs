//! Modeling pipeline for learner-perceived knowledge.
//!
//! The crate covers the full loop: ingest a heterogeneous graph of learners,
//! concepts, and assessment items ([`graph`]); carve out the perception
//! subgraph, split edges, and sample negatives ([`subgraph`]); train an
//! attention-based heterogeneous GNN link predictor ([`hgnn`]) alongside
//! reference baselines ([`baselines`]); score knowledge monitoring with
//! signal-detection metrics ([`sdt`]); classify learners and assemble
//! three-part feedback reports ([`coach`]); synthesize ground-truthed cohorts
//! ([`synth`]); and run repeated-trial evaluations ([`eval`]).
//!
//! All randomness flows from explicit `u64` seeds through ChaCha8 streams
//! (see [`rng`]); identical inputs and seeds give byte-identical outputs.

pub mod attention;
pub mod baselines;
pub mod coach;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hgnn;
pub mod opt;
pub mod rng;
pub mod sdt;
pub mod subgraph;
pub mod synth;

pub use error::{Error, Result};
