use std::path::PathBuf;

use crate::geo::TileId;
use crate::index::IndexKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geohash {code:?}: {reason}")]
    GeohashDecode { code: String, reason: String },

    #[error("duplicate tile id {0} in index input")]
    DuplicateEntry(TileId),

    #[error("tile {0} already ingested")]
    DuplicateIngest(TileId),

    #[error("replication needs {required} live nodes, only {live} available")]
    Replication { required: usize, live: usize },

    #[error("unknown storage node {0}")]
    UnknownNode(u32),

    #[error("unknown tile {0}")]
    UnknownTile(TileId),

    #[error("tile {tile} band {band:?} unavailable: every replica is down")]
    Unavailable { tile: TileId, band: String },

    #[error("tile {tile} band {band:?} failed checksum on node {node}")]
    Corruption { tile: TileId, band: String, node: u32 },

    #[error("{kind} index build failed: {source}")]
    Build {
        kind: IndexKind,
        #[source]
        source: Box<Error>,
    },

    #[error("query timed out: {0}")]
    QueryTimeout(String),

    #[error("index results disagree: {0}")]
    IndexDisagreement(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("store not found at {0}")]
    MissingStore(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// Coarse classification used by the CLI exit codes and HTTP status mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_)
            | Error::GeohashDecode { .. }
            | Error::DuplicateEntry(_)
            | Error::DuplicateIngest(_) => ErrorClass::Validation,
            Error::UnknownNode(_) | Error::UnknownTile(_) => ErrorClass::NotFound,
            Error::QueryTimeout(_) => ErrorClass::Timeout,
            Error::Build { source, .. } => source.class(),
            _ => ErrorClass::Store,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    Store,
    Timeout,
}
