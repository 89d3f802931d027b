//! Multi-order interaction (MOI) layers and the MOI-Mixer sequential recommender.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: dense matrices, activations, normalisation and a reverse-mode tape.
//! - [`moi`]: the full interaction-tensor oracle, its rank-1 Hadamard realisation,
//!   the MOI layer and the gMLP block.
//! - [`model`]: embedding, token/channel-mixing encoder blocks and the prediction head.
//! - [`training`]: masked item prediction, Adam, cosine schedule and the epoch loop.
//! - [`dataset`]: interaction-log ingestion, k-core filtering, leave-one-out splits,
//!   popularity negative sampling and synthetic data.
//! - [`evaluation`]: HR/NDCG, the popularity baseline, parameter and FLOP accounting,
//!   and the interaction-order grid.
//! - [`cli`]: the `moi-mixer` command-line front end.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod moi;
pub mod numcore;
pub mod training;

pub use error::{Error, Result};
