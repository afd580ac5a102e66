use std::fs;
use std::path::Path;

use super::DataError;
use crate::numerics::Tensor;

const IMAGES: u32 = 0x0000_0803;
const LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// `[n, rows, cols]`, bytes mapped to [−1, 1].
    Images(Tensor),
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::TruncatedFile(format!("header ends before byte {}", at + 4)))
}

/// Parses an unsigned-byte IDX file of rank 3 (images) or rank 1 (labels).
pub fn read_idx(path: &Path) -> Result<IdxData, DataError> {
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0)?;
    let (dims, header) = match magic {
        IMAGES => (vec![be_u32(&bytes, 4)?, be_u32(&bytes, 8)?, be_u32(&bytes, 12)?], 16),
        LABELS => (vec![be_u32(&bytes, 4)?], 8),
        other => return Err(DataError::BadMagic(other)),
    };
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let payload = &bytes[header..];
    if payload.len() < count {
        return Err(DataError::TruncatedFile(format!("expected {count} data bytes, found {}", payload.len())));
    }
    let payload = &payload[..count];
    Ok(match magic {
        IMAGES => {
            let values = payload.iter().map(|&b| b as f64 / 127.5 - 1.0).collect();
            let shape = dims.iter().map(|&d| d as usize).collect();
            IdxData::Images(Tensor::new(shape, values).expect("sized"))
        }
        _ => IdxData::Labels(payload.to_vec()),
    })
}

pub fn write_idx_images(path: &Path, n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Result<(), DataError> {
    if pixels.len() != (n * rows * cols) as usize {
        return Err(DataError::BadParameter("pixel count does not match the dimensions".into()));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES, n, rows, cols] {
        out.extend(v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(fs::write(path, out)?)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABELS.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    Ok(fs::write(path, out)?)
}
