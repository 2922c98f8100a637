//! Text file formats.
//!
//! | file                | format                                          |
//! |---------------------|-------------------------------------------------|
//! | primitive params    | JSON, see [`params_to_json`]                    |
//! | kinematic chain     | JSON, see [`chain_to_json`]                     |
//! | joint recording     | `D=<n>,<names..>` header, then `t,q..[,qd..]`   |
//! | feedback list       | `trajectory_id,reward` per line                 |
//! | observation stream  | `stamp,source_id,x,y,z,noise_std` per line      |
//!
//! Floats are written in shortest round-trip form, so every format reloads
//! bit-exactly, with one exception: chain joint rotations pass through
//! roll/pitch/yaw and come back within a few ulps.

mod chain;
mod feedback;
mod observations;
mod params;
mod recording;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::promp::PrimitiveError;
use crate::refine::RefineError;
use crate::segment::SegmentError;

pub use chain::{chain_from_json, chain_to_json, ChainFile};
pub use feedback::{parse_feedback, write_feedback};
pub use observations::{parse_observations, write_observations};
pub use params::{params_from_json, params_to_json, PARAMS_SCHEMA_VERSION};
pub use recording::{parse_recording, write_recording};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("at `{path}`: {message}")]
    Json { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

impl IoError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            line,
            message: message.into(),
        }
    }

    /// Prefixes a file path onto parse errors.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            Self::Parse { line, message } => Self::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            Self::Json { path: field, message } => Self::Json {
                path: field,
                message: format!("{} ({message})", path.display()),
            },
            other => other,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

/// Writes through a temporary sibling file and renames it into place, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let wrap = |source| IoError::File {
        path: path.to_owned(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(wrap)?;
    file.write_all(contents).map_err(wrap)?;
    file.sync_all().map_err(wrap)?;
    drop(file);
    fs::rename(&tmp, path).map_err(wrap)
}

/// Deserializes JSON, reporting the field path of the first bad value.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::Json {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Splits a comma-separated record and parses every field as `f64`.
fn parse_floats(line_no: usize, fields: &[&str]) -> Result<Vec<f64>, IoError> {
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IoError::parse(line_no, format!("field {}: `{f}` is not a finite number", i + 1)))
        })
        .collect()
}

/// Non-empty, non-comment lines with 1-based line numbers and trimmed fields.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split(',').map(str::trim).collect()))
        }
    })
}
