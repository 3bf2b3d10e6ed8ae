//! File formats: Doppler PLY point clouds, TUM trajectories, CSV reports,
//! and the TOML configuration / scene-spec files.

pub mod config;
pub mod ply;
pub mod report;
pub mod tum;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
}
