//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HTAD"  magic
//! u32     format version (1)
//! u32     kind
//! u32     header word count H, then H u32 header words
//! u32     tensor count T, then T × (rows u32, cols u32)
//! f64 ×   every tensor's entries, row-major, in declaration order
//! ```

use std::fs;
use std::path::Path;

use crate::adapternet::Backbone;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const MAGIC: &[u8; 4] = b"HTAD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum CheckpointKind {
    /// Per-group trainable state.
    Group = 1,
    /// Global share-adapter set.
    Share = 2,
    /// Frozen backbone weights.
    Backbone = 3,
}

impl CheckpointKind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Self::Group),
            2 => Some(Self::Share),
            3 => Some(Self::Backbone),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub header: Vec<u32>,
    pub tensors: Vec<Matrix>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: need {end} bytes, have {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((self.kind as u32).to_le_bytes());
        out.extend((self.header.len() as u32).to_le_bytes());
        for h in &self.header {
            out.extend(h.to_le_bytes());
        }
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend((t.rows() as u32).to_le_bytes());
            out.extend((t.cols() as u32).to_le_bytes());
        }
        for t in &self.tensors {
            out.extend(t.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind_raw = r.u32()?;
        let kind = CheckpointKind::from_u32(kind_raw)
            .ok_or_else(|| Error::Checkpoint(format!("unknown kind {kind_raw}")))?;
        let header = (0..r.u32()?).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let shapes = (0..r.u32()?)
            .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
            .collect::<Result<Vec<_>>>()?;
        let mut tensors = Vec::with_capacity(shapes.len());
        for (rows, cols) in shapes {
            let raw = r.take(rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Matrix::from_vec(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            kind,
            header,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Splits a 64-bit value into `[low, high]` header words.
pub fn u64_words(v: u64) -> [u32; 2] {
    [v as u32, (v >> 32) as u32]
}

pub fn words_u64(low: u32, high: u32) -> u64 {
    low as u64 | ((high as u64) << 32)
}

/// Frozen weights in the same order as [`Backbone::frozen_bytes`], so the
/// tensor section of the file hashes to the backbone fingerprint.
pub fn backbone_checkpoint(backbone: &Backbone) -> Checkpoint {
    let mut tensors = vec![backbone.input_proj().clone()];
    for b in backbone.blocks() {
        tensors.push(b.w1.clone());
        tensors.push(b.w2.clone());
    }
    let [lo, hi] = u64_words(backbone.fingerprint());
    Checkpoint {
        kind: CheckpointKind::Backbone,
        header: vec![backbone.depth() as u32, lo, hi],
        tensors,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::adapternet::ModelConfig;
    use crate::numkit::{fnv1a64, SeededRng};

    #[test]
    fn layout_is_stable() {
        let ck = Checkpoint {
            kind: CheckpointKind::Share,
            header: vec![7],
            tensors: vec![Matrix::from_rows(&[[1.0, 2.0]])],
        };
        let bytes = ck.encode();
        let mut expected = b"HTAD".to_vec();
        for w in [1u32, 2, 1, 7, 1, 1, 2] {
            expected.extend(w.to_le_bytes());
        }
        expected.extend(1.0f64.to_le_bytes());
        expected.extend(2.0f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ck = Checkpoint {
            kind: CheckpointKind::Group,
            header: vec![],
            tensors: vec![Matrix::identity(2)],
        };
        let bytes = ck.encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn backbone_tensor_section_hashes_to_fingerprint() {
        let cfg = ModelConfig {
            group_id: 0,
            depth: 2,
            width: 4,
            bottleneck: 2,
            input_dim: 3,
            num_classes: 2,
        };
        let bb = Backbone::random(&cfg, &mut SeededRng::new(1, "bb"));
        let ck = backbone_checkpoint(&bb);
        let bytes = ck.encode();
        let data_len: usize = ck.tensors.iter().map(|t| t.len() * 8).sum();
        assert_eq!(fnv1a64(&bytes[bytes.len() - data_len..]), bb.fingerprint());
        assert_eq!(words_u64(ck.header[1], ck.header[2]), bb.fingerprint());
    }

    proptest! {
        #[test]
        fn round_trip(header in proptest::collection::vec(any::<u32>(), 0..4),
                      shapes in proptest::collection::vec((0usize..4, 0usize..4), 0..4),
                      seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed, "ck");
            let tensors = shapes.iter().map(|&(r, c)| rng.normal_matrix(r, c, 1.0)).collect();
            let ck = Checkpoint { kind: CheckpointKind::Group, header, tensors };
            prop_assert_eq!(Checkpoint::decode(&ck.encode()).unwrap(), ck);
        }
    }
}
