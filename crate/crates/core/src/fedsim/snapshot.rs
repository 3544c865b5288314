//! Server state to and from checkpoint containers.

use crate::adapternet::checkpoint::{u64_words, words_u64, Checkpoint, CheckpointKind};
use crate::adapternet::SharePair;
use crate::error::{Error, Result};
use crate::fedsim::aggregate::{GroupState, LocalBlockState, ShareSet};
use crate::numkit::Matrix;

/// Header: `[depth, num_branches, round_lo, round_hi]`. Tensors: per block
/// `w_loc_d`, `w_loc_u`, `alphas` (1×M), then the head.
pub fn group_checkpoint(state: &GroupState, round: u64) -> Result<Checkpoint> {
    let num_branches = state.blocks.first().map_or(0, |b| b.alphas.len());
    let mut tensors = Vec::with_capacity(3 * state.blocks.len() + 1);
    for b in &state.blocks {
        tensors.push(b.w_loc_d.clone());
        tensors.push(b.w_loc_u.clone());
        tensors.push(Matrix::from_vec(1, b.alphas.len(), b.alphas.clone())?);
    }
    tensors.push(state.head.clone());
    let [lo, hi] = u64_words(round);
    Ok(Checkpoint {
        kind: CheckpointKind::Group,
        header: vec![state.blocks.len() as u32, num_branches as u32, lo, hi],
        tensors,
    })
}

/// Inverse of [`group_checkpoint`]; returns the state and its round.
pub fn group_from_checkpoint(ck: &Checkpoint) -> Result<(GroupState, u64)> {
    let [depth, _, lo, hi] = expect_header(ck, CheckpointKind::Group)?;
    let depth = depth as usize;
    if ck.tensors.len() != 3 * depth + 1 {
        return Err(Error::Checkpoint(format!(
            "group checkpoint with depth {depth} holds {} tensors",
            ck.tensors.len()
        )));
    }
    let blocks = ck.tensors[..3 * depth]
        .chunks_exact(3)
        .map(|c| LocalBlockState {
            w_loc_d: c[0].clone(),
            w_loc_u: c[1].clone(),
            alphas: c[2].data().to_vec(),
        })
        .collect();
    let head = ck.tensors[3 * depth].clone();
    Ok((GroupState { blocks, head }, words_u64(lo, hi)))
}

/// Header: `[num_slots, num_branches, round_lo, round_hi]`. Tensors: for
/// each slot, for each branch, `down` then `up`.
pub fn share_checkpoint(share: &ShareSet, round: u64) -> Checkpoint {
    let tensors = share
        .slots
        .iter()
        .flatten()
        .flat_map(|p| [p.down.clone(), p.up.clone()])
        .collect();
    let [lo, hi] = u64_words(round);
    Checkpoint {
        kind: CheckpointKind::Share,
        header: vec![
            share.num_slots() as u32,
            share.num_branches() as u32,
            lo,
            hi,
        ],
        tensors,
    }
}

pub fn share_from_checkpoint(ck: &Checkpoint) -> Result<(ShareSet, u64)> {
    let [slots, branches, lo, hi] = expect_header(ck, CheckpointKind::Share)?;
    let (slots, branches) = (slots as usize, branches as usize);
    if ck.tensors.len() != 2 * slots * branches {
        return Err(Error::Checkpoint(format!(
            "share checkpoint for {slots}×{branches} holds {} tensors",
            ck.tensors.len()
        )));
    }
    let pairs: Vec<SharePair> = ck
        .tensors
        .chunks_exact(2)
        .map(|c| SharePair {
            down: c[0].clone(),
            up: c[1].clone(),
        })
        .collect();
    let slots = if branches == 0 {
        vec![Vec::new(); slots]
    } else {
        pairs.chunks(branches).map(<[SharePair]>::to_vec).collect()
    };
    Ok((ShareSet { slots }, words_u64(lo, hi)))
}

fn expect_header(ck: &Checkpoint, kind: CheckpointKind) -> Result<[u32; 4]> {
    if ck.kind != kind {
        return Err(Error::Checkpoint(format!(
            "expected {kind:?} checkpoint, found {:?}",
            ck.kind
        )));
    }
    ck.header
        .as_slice()
        .try_into()
        .map_err(|_| Error::Checkpoint(format!("header has {} words, expected 4", ck.header.len())))
}
