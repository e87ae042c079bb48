//! Text formats read and written by the command-line tools.
//!
//! Parsers take in-memory text and never panic; every failure carries the
//! line or key it refers to.

mod labels;
mod report;
mod rig;
mod tables;

pub use labels::{
    parse_label_lines, parse_labels, parse_labels_bytes, parse_labels_normalized, write_labels, ConfidenceField,
    LabelLine, ParsedBox,
};
pub use report::{fmt_sig, parse_models, round_sig, write_json_report, write_models};
pub use rig::{parse_rig, parse_rig_bytes, parse_rig_config, write_rig, RigConfig, RIG_KEYS};
pub use tables::{
    parse_embeddings, parse_size_table, parse_weather, write_cluster_labels, write_paired_csv, write_reduced_csv,
    write_size_csv, write_size_table, EmbeddingRow, SizeRecord, SizeRow, SIZE_HEADER,
};

use std::fmt;

use thiserror::Error;

/// One rejected line of a line-oriented file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for MalformedLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("{} malformed line(s): {}", .0.len(), join_lines(.0))]
    Malformed(Vec<MalformedLine>),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("`{key}` violates a rig invariant: {reason}")]
    InvariantViolation { key: String, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("header lacks column `{0}`")]
    MissingColumn(String),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
}

impl IoError {
    /// Line numbers of every malformed line, or the single syntax-error line.
    pub fn lines(&self) -> Vec<usize> {
        match self {
            IoError::Malformed(lines) => lines.iter().map(|l| l.line).collect(),
            IoError::Syntax { line, .. } => vec![*line],
            _ => Vec::new(),
        }
    }

    /// The key an error refers to, for the key-value formats.
    pub fn key(&self) -> Option<&str> {
        match self {
            IoError::MissingKey(key) | IoError::MissingColumn(key) => Some(key),
            IoError::InvalidValue { key, .. } | IoError::InvariantViolation { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn join_lines(lines: &[MalformedLine]) -> String {
    lines.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, IoError>;
