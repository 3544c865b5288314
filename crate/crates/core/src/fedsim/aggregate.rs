use serde::{Deserialize, Serialize};

use crate::adapternet::{share_slot, AdapterUpdate, ModelConfig, SharePair};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// `Σ w_k·X_k / Σ w_k`, evaluated as `X_0 + Σ w_k·(X_k − X_0) / Σ w_k` with
/// the sum taken in slice order. The anchored form returns `X_0` bit-exactly
/// when all inputs agree.
pub fn weighted_average(items: &[&Matrix], weights: &[f64]) -> Result<Matrix> {
    let first = items
        .first()
        .ok_or_else(|| Error::InvalidArgument("weighted_average of nothing".into()))?;
    if items.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} items but {} weights",
            items.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "negative or non-finite weight in {weights:?}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "total aggregation weight is zero".into(),
        ));
    }
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for (item, &w) in items.iter().zip(weights) {
        acc.add_scaled_assign(&item.sub(first)?, w)?;
    }
    let mut out = (*first).clone();
    out.add_scaled_assign(&acc, 1.0 / total)?;
    Ok(out)
}

fn weighted_average_vec(items: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    let rows: Vec<Matrix> = items
        .iter()
        .map(|v| Matrix::from_vec(1, v.len(), v.to_vec()))
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = rows.iter().collect();
    Ok(weighted_average(&refs, weights)?.into_vec())
}

/// Aggregation weight of each update: `|D_k|`, or 1 under uniform weighting.
pub fn update_weights(updates: &[&AdapterUpdate], uniform: bool) -> Vec<f64> {
    updates
        .iter()
        .map(|u| if uniform { 1.0 } else { u.sample_count as f64 })
        .collect()
}

/// Model-type-specific state of one block held by the server.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBlockState {
    pub w_loc_d: Matrix,
    pub w_loc_u: Matrix,
    pub alphas: Vec<f64>,
}

/// Server copy of one group's local-adapters, scalars and head.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupState {
    pub blocks: Vec<LocalBlockState>,
    pub head: Matrix,
}

/// Weighted average, per block position, of every local-adapter matrix,
/// scalar vector and head from one group's updates.
pub fn aggregate_local(
    group_id: usize,
    updates: &[&AdapterUpdate],
    uniform: bool,
) -> Result<GroupState> {
    let first = updates
        .first()
        .ok_or_else(|| Error::InvalidArgument(format!("no updates for group {group_id}")))?;
    for u in updates {
        if u.group_id != group_id {
            return Err(Error::Protocol(format!(
                "update from group {} in aggregation of group {group_id}",
                u.group_id
            )));
        }
        if u.blocks.len() != first.blocks.len() {
            return Err(Error::Protocol(format!(
                "group {group_id} updates disagree on depth ({} vs {})",
                u.blocks.len(),
                first.blocks.len()
            )));
        }
    }
    let weights = update_weights(updates, uniform);
    let blocks = (0..first.blocks.len())
        .map(|j| {
            let down: Vec<&Matrix> = updates.iter().map(|u| &u.blocks[j].w_loc_d).collect();
            let up: Vec<&Matrix> = updates.iter().map(|u| &u.blocks[j].w_loc_u).collect();
            let alphas: Vec<&[f64]> = updates
                .iter()
                .map(|u| u.blocks[j].alphas.as_slice())
                .collect();
            Ok(LocalBlockState {
                w_loc_d: weighted_average(&down, &weights)?,
                w_loc_u: weighted_average(&up, &weights)?,
                alphas: weighted_average_vec(&alphas, &weights)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let heads: Vec<&Matrix> = updates.iter().map(|u| &u.head).collect();
    Ok(GroupState {
        blocks,
        head: weighted_average(&heads, &weights)?,
    })
}

/// Global share-adapter set: `slots[s][i]` is branch `i` at slot `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShareSet {
    pub slots: Vec<Vec<SharePair>>,
}

impl ShareSet {
    pub fn identity(num_slots: usize, num_branches: usize, r: usize) -> Self {
        Self {
            slots: vec![vec![SharePair::identity(r); num_branches]; num_slots],
        }
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn num_branches(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareAggregation {
    /// Branch `i` averages only the group-`i` clients that trained it.
    PerBranch,
    /// Every branch averages over every client mapped to the slot; clients
    /// outside the branch's group contribute the frozen copy they received.
    Flat,
}

/// New share set after one round. `configs[g]` describes group `g`; slot
/// `s` of branch `i` averages (by sample count) the block of each
/// contributing client whose depth mapping lands on `s`. Slots and branches
/// with no contribution are carried over unchanged.
pub fn aggregate_share(
    updates: &[&AdapterUpdate],
    configs: &[ModelConfig],
    prior: &ShareSet,
    mode: ShareAggregation,
    uniform: bool,
) -> Result<ShareSet> {
    let num_branches = prior.num_branches();
    let max_depth = prior.num_slots();
    for u in updates {
        u.check_purity()?;
        let cfg = configs
            .get(u.group_id)
            .ok_or_else(|| Error::Protocol(format!("update names unknown group {}", u.group_id)))?;
        if u.group_id >= num_branches || u.blocks.len() != cfg.depth || cfg.depth > max_depth {
            return Err(Error::Protocol(format!(
                "update from group {} does not fit the share set ({} blocks, {} slots, {} branches)",
                u.group_id,
                u.blocks.len(),
                max_depth,
                num_branches
            )));
        }
    }
    let weights = update_weights(updates, uniform);

    let mut next = prior.clone();
    for s in 0..max_depth {
        for i in 0..num_branches {
            let mut downs: Vec<&Matrix> = Vec::new();
            let mut ups: Vec<&Matrix> = Vec::new();
            let mut ws: Vec<f64> = Vec::new();
            for (u, &w) in updates.iter().zip(&weights) {
                let depth = configs[u.group_id].depth;
                let Some(block) = (0..depth).find(|&j| share_slot(j, depth, max_depth) == s) else {
                    continue;
                };
                let pair = if u.group_id == i {
                    &u.blocks[block].share
                } else {
                    match mode {
                        ShareAggregation::PerBranch => continue,
                        ShareAggregation::Flat => &prior.slots[s][i],
                    }
                };
                downs.push(&pair.down);
                ups.push(&pair.up);
                ws.push(w);
            }
            if downs.is_empty() {
                continue;
            }
            next.slots[s][i] = SharePair {
                down: weighted_average(&downs, &ws)?,
                up: weighted_average(&ups, &ws)?,
            };
        }
    }
    Ok(next)
}
