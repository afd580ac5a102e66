//! Synthetic datasets, IDX ingestion, PGM grids and checkpoints.

mod checkpoint;
mod dataset;
mod idx;
mod pgm;
mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dataset::Dataset;
pub use idx::{read_idx, write_idx_images, write_idx_labels, IdxData};
pub use pgm::{pgm_grid_bytes, write_pgm_grid};
pub use synthetic::{make_bouncing_dot, make_mixture, render_clip, MixtureDataset, VideoDataset};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("checkpoint version {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptManifest(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests;
