//! IDX (MNIST-style) files: big-endian header, `u8` payload.

use std::fs;
use std::path::Path;

use crate::datapart::Dataset;
use crate::error::{Error, IdxError, Result};
use crate::numkit::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// One `rows·cols` slice per image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            expected: end,
            actual: bytes.len(),
            offset,
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            expected,
            found,
            offset: 0,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, offset: usize) -> Result<(), IdxError> {
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len(),
            offset,
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = 16 + n * rows * cols;
    check_len(bytes, expected, 16)?;
    Ok(IdxImages {
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    check_len(bytes, 8 + n, 8)?;
    Ok(bytes[8..8 + n].to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend(IMAGES_MAGIC.to_be_bytes());
    out.extend((images.count() as u32).to_be_bytes());
    out.extend((images.rows as u32).to_be_bytes());
    out.extend((images.cols as u32).to_be_bytes());
    out.extend(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

/// Builds a dataset from parsed IDX content; pixels scale to `[0, 1]`.
/// The class count is one more than the largest label.
pub fn idx_to_dataset(images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
            offset: 4,
        }
        .into());
    }
    let dim = images.rows * images.cols;
    let data = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let features = Matrix::from_vec(labels.len(), dim, data)?;
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    Dataset::new(
        features,
        labels.iter().map(|&l| l as usize).collect(),
        classes,
    )
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lab = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    idx_to_dataset(&parse_images(&img)?, &parse_labels(&lab)?)
}

pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    images: &IdxImages,
    labels: &[u8],
) -> Result<()> {
    fs::write(images_path, encode_images(images)).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, encode_labels(labels)).map_err(|e| Error::io(labels_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_white_pixel_scales_to_one() {
        let images = IdxImages {
            rows: 1,
            cols: 1,
            pixels: vec![255],
        };
        let d = idx_to_dataset(&images, &[0]).unwrap();
        assert_eq!(d.features().get(0, 0), 1.0);
    }

    #[test]
    fn three_images_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
        let images = IdxImages {
            rows: 2,
            cols: 3,
            pixels: (0..18).map(|v| (v * 14) as u8).collect(),
        };
        let labels = vec![2, 0, 1];
        write_idx(&ip, &lp, &images, &labels).unwrap();
        assert_eq!(parse_images(&fs::read(&ip).unwrap()).unwrap(), images);
        assert_eq!(parse_labels(&fs::read(&lp).unwrap()).unwrap(), labels);
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.features().shape(), (3, 6));
        assert_eq!(d.labels(), &[2, 0, 1]);
        assert_eq!(d.features().get(1, 0), 84.0 / 255.0);
    }

    #[test]
    fn header_only_file_is_truncated() {
        let mut bytes = encode_images(&IdxImages {
            rows: 2,
            cols: 2,
            pixels: vec![0; 8],
        });
        bytes.truncate(16);
        assert_eq!(
            parse_images(&bytes).unwrap_err(),
            IdxError::Truncated {
                expected: 24,
                actual: 16,
                offset: 16
            }
        );
        let msg = parse_images(&bytes).unwrap_err().to_string();
        assert!(msg.contains("24") && msg.contains("16"), "{msg}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let bytes = encode_labels(&[1, 2]);
        assert!(matches!(
            parse_images(&bytes),
            Err(IdxError::BadMagic {
                found: LABELS_MAGIC,
                ..
            })
        ));
        assert!(matches!(
            parse_labels(&[0, 0]),
            Err(IdxError::Truncated { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let images = IdxImages {
            rows: 1,
            cols: 1,
            pixels: vec![1, 2],
        };
        let err = idx_to_dataset(&images, &[0]).unwrap_err();
        assert!(matches!(
            err,
            Error::Idx(IdxError::CountMismatch {
                images: 2,
                labels: 1,
                ..
            })
        ));
    }
}
