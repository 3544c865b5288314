//! Frozen-backbone models carrying one FedAdapter per block.
//!
//! Each adapter has a local down/up projection (`m×r`, `r×m`) and `M`
//! square share branches, one per model type, mixed by per-branch scalars:
//!
//! ```text
//! y = x + gelu(x · W_d · Σ α_i·S_d^i) · Σ α_i·S_u^i · W_u
//! ```
//!
//! During training only the local pair, the model's own branch, the scalars
//! and the classifier head move. At inference the products collapse into a
//! single `(A', B')` pair.

mod adapter;
pub mod checkpoint;
mod counts;
mod model;
mod train;

pub use adapter::{
    adapter_backward, adapter_forward, adapter_fuse, fused_forward, init_adapter, random_adapter,
    AdapterCache, AdapterGrads, FedAdapter, SharePair,
};
pub use counts::{param_count, param_counts, ParamCount};
pub use model::{
    share_slot, Backbone, FrozenBlock, HeteroModel, ModelCache, ModelConfig, ModelGrads,
};
pub use train::{local_train, AdapterUpdate, BlockUpdate, TrainOptions};
