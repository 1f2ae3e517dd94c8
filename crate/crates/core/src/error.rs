use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("argument {arg} of {mention} does not name an entity mention in document {doc}")]
    DanglingArgumentRef {
        doc: String,
        mention: String,
        arg: String,
    },
    #[error("duplicate document id {0}")]
    DuplicateDocId(String),
    #[error("duplicate mention id {0}")]
    DuplicateMentionId(String),
    #[error("no embeddings for document {0}")]
    MissingDocument(String),
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimMismatch {
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("bad embedding file: {0}")]
    BadEmbeddingFile(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint manifest corrupt: {0}")]
    ManifestCorrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
    #[error("mention {0} is already clustered")]
    DuplicateMention(String),
    #[error("entity mention {0} missing from the entity clustering")]
    UnknownEntityMention(String),
    #[error("mention {0} has no gold cluster")]
    MissingGold(String),
    #[error("event mode requires an entity clustering")]
    MissingEntityClusters,
    #[error("mention universes differ: {0}")]
    UniverseMismatch(String),
    #[error("clusterings cover different documents: {0}")]
    CoverageMismatch(String),
    #[error("need at least {k} documents for k-means, got {docs}")]
    TooFewDocuments { k: usize, docs: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("score bound violated: {invocations} invocations > bound {bound}")]
    BoundViolation { invocations: u64, bound: u64 },
    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing topic assignment for document {0}")]
    MissingTopic(String),
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::DimMismatch {
            expected,
            got,
            context: context.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::DanglingArgumentRef { .. } => "DanglingArgumentRef",
            Error::DuplicateDocId(_) => "DuplicateDocId",
            Error::DuplicateMentionId(_) => "DuplicateMentionId",
            Error::MissingDocument(_) => "MissingDocument",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::TruncatedFile(_) => "TruncatedFile",
            Error::BadEmbeddingFile(_) => "BadEmbeddingFile",
            Error::NonFinite(_) => "NonFinite",
            Error::ManifestCorrupt(_) => "ManifestCorrupt",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::UnknownCluster(_) => "UnknownCluster",
            Error::DuplicateMention(_) => "DuplicateMention",
            Error::UnknownEntityMention(_) => "UnknownEntityMention",
            Error::MissingGold(_) => "MissingGold",
            Error::MissingEntityClusters => "MissingEntityClusters",
            Error::UniverseMismatch(_) => "UniverseMismatch",
            Error::CoverageMismatch(_) => "CoverageMismatch",
            Error::TooFewDocuments { .. } => "TooFewDocuments",
            Error::NonFiniteGradient(_) => "NonFiniteGradient",
            Error::BoundViolation { .. } => "BoundViolation",
            Error::InfeasibleConfig(_) => "InfeasibleConfig",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::MissingTopic(_) => "MissingTopic",
            Error::Format(_) => "Format",
        }
    }

    /// Input-validation failures, as opposed to environment/runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteGradient(_) | Error::BoundViolation { .. }
        )
    }
}
