//! Federated rounds: client sampling, local training, two-tier server
//! aggregation and experiment orchestration.
//!
//! The server keeps one [`GroupState`] per model type (local pairs, branch
//! scalars, head) and a single [`ShareSet`] whose slot count equals the
//! deepest model. Shallower models map block `j` onto slot
//! `round(j·(Lmax−1)/(L−1))`.

mod aggregate;
mod experiment;
mod federation;
pub mod snapshot;

pub use aggregate::{
    aggregate_local, aggregate_share, update_weights, weighted_average, GroupState,
    LocalBlockState, ShareAggregation, ShareSet,
};
pub use experiment::{
    designated_group, load_data, run_experiment, ExperimentOutcome, GroupAssignment, GroupReport,
    GroupSummary, RoundReport,
};
pub use federation::{evaluate, Client, Federation, FederationSettings, GroupRound, ServerState};
