//! Deterministic simulator for federated fine-tuning of heterogeneous frozen
//! models through multi-branch adapters.
//!
//! Modules, bottom-up:
//!
//! * [`numkit`]: dense matrices, GELU, cross-entropy, SGD, keyed RNG streams.
//! * [`adapternet`]: FedAdapter forward/backward/fusion, the frozen-backbone
//!   model, local training, parameter accounting and checkpoints.
//! * [`datapart`]: blob synthesis, IDX ingestion, Dirichlet partitioning.
//! * [`fedsim`]: server aggregation, the round loop and experiment modes.
//! * [`config`]: declarative experiment description.
//! * [`verify`]: fixed-seed property checks with independent oracles.

pub mod adapternet;
pub mod config;
pub mod datapart;
mod error;
pub mod fedsim;
pub mod numkit;
pub mod verify;

pub use error::{Error, ErrorKind, IdxError, Result};
