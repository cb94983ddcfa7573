use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate distribution: all weights are zero")]
    DegenerateDistribution,
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("input shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("uninitialized class row {0}")]
    UninitializedClassRow(usize),
    #[error("label row {0} is not an active class")]
    InactiveLabel(usize),
    #[error("novel labels forbidden in base training (category {0})")]
    NovelLabelInBaseTraining(u32),
    #[error("unknown category id {0}")]
    UnknownCategory(u32),
    #[error("degenerate shot {0}: feature has zero norm")]
    DegenerateShot(usize),
    #[error("category {0} is not a novel class slot")]
    NotNovelSlot(u32),
    #[error("novel class {0} is not imprinted")]
    InactiveRow(u32),
    #[error("corrupt RLE: counts sum to {sum}, expected {expected}")]
    CorruptRle { sum: u64, expected: u64 },
    #[error("undefined IoU: both masks are empty")]
    UndefinedIou,
    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no sampleable region")]
    NoSampleableRegion,
    #[error("scene too crowded: could not place shapes after {0} attempts")]
    SceneTooCrowded(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated payload: need {needed} bytes, file has {available}")]
    TruncatedPayload { needed: u64, available: u64 },
    #[error("shape/offset inconsistency: {0}")]
    Inconsistent(String),
    #[error("referential integrity: {}", .0.join("; "))]
    ReferentialIntegrity(Vec<String>),
    #[error("no available shot for novel classes {0:?}")]
    MissingShots(Vec<u32>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }
}
