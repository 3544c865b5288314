//! Dataset synthesis, IDX ingestion and non-IID client partitioning.

mod dataset;
pub mod idx;
mod partition;

pub use dataset::{gen_blobs, stratified_split, Dataset};
pub use idx::load_idx;
pub use partition::{
    dirichlet_partition, label_entropy, mean_client_entropy, PartitionPlan, MAX_PARTITION_ATTEMPTS,
};
