use thiserror::Error;

#[derive(Error, Debug)]
pub enum SegnnError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed line {line_no} in {path}: {reason}")]
    MalformedLine {
        path: String,
        line_no: usize,
        reason: String,
    },
    #[error("id {id} out of range on side {side}")]
    DanglingId { id: usize, side: u8 },
    #[error("graph has no triples")]
    EmptyGraph,
    #[error("entity {id} appears in more than one seed pair (side {side})")]
    DuplicateEntity { id: usize, side: u8 },
    #[error("seed id {id} out of range on side {side}")]
    OutOfRangeId { id: usize, side: u8 },
    #[error("dimension mismatch: found {found}, expected {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error("non-finite value in embedding row {row}")]
    NonFiniteValue { row: usize },
    #[error("CSLS neighbor count {q} out of range for {rows}x{cols} matrix")]
    QOutOfRange { q: usize, rows: usize, cols: usize },
    #[error("top-K count {k} out of range ({limit} available)")]
    KOutOfRange { k: usize, limit: usize },
    #[error("seed set is empty, cannot compute alignment loss")]
    EmptySeeds,
    #[error("non-finite gradient in block {block}")]
    NonFiniteGradient { block: String },
    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch or truncated file")]
    CorruptChecksum,
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SegnnError>;

impl SegnnError {
    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use SegnnError::*;
        match self {
            Config(_) | QOutOfRange { .. } | KOutOfRange { .. } => 2,
            NonFiniteValue { .. } | NonFiniteGradient { .. } => 4,
            _ => 3,
        }
    }
}
