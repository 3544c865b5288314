use serde::Serialize;

use crate::adapternet::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamCount {
    /// Weights trained and uploaded per round: local pair, own branch and
    /// all `M` scalars per block, plus the head.
    pub trainable: usize,
    /// Frozen backbone plus every adapter weight (all branches) plus the head.
    pub total: usize,
    pub reduction_ratio: f64,
}

impl ParamCount {
    /// Upload size per client per round.
    pub fn payload_bytes(&self) -> usize {
        8 * self.trainable
    }
}

pub fn param_count(config: &ModelConfig, num_branches: usize) -> ParamCount {
    let (l, m, r, c) = (
        config.depth,
        config.width,
        config.bottleneck,
        config.num_classes,
    );
    let head = m * c;
    let trainable = l * (2 * m * r + 2 * r * r + num_branches) + head;
    let frozen = config.input_dim * m + l * 2 * m * m;
    let adapters = l * (2 * m * r + num_branches * 2 * r * r + num_branches);
    let total = frozen + adapters + head;
    ParamCount {
        trainable,
        total,
        reduction_ratio: 1.0 - trainable as f64 / total as f64,
    }
}

pub fn param_counts(configs: &[ModelConfig], num_branches: usize) -> Vec<ParamCount> {
    configs
        .iter()
        .map(|c| param_count(c, num_branches))
        .collect()
}
