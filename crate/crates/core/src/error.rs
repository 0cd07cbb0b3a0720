use thiserror::Error;

/// Errors raised while ingesting or transforming datasets and embeddings.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("could not read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("duplicate feature name `{0}`")]
    DuplicateFeatureName(String),
    #[error("non-numeric or missing cell at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize },
    #[error("dataset has no rows or no feature columns")]
    EmptyDataset,
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("embedding has {got} rows but the dataset has {expected}")]
    RowCountMismatch { expected: usize, got: usize },
    #[error("PCA needs at least 2 rows and 2 features (got {n}x{m})")]
    InsufficientData { n: usize, m: usize },
    #[error("data has rank < 2; second axis filled with zeros")]
    DegenerateData,
}

/// Errors raised while building a cluster assignment.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("dataset has no ground-truth labels")]
    MissingLabels,
    #[error("manual annotation requires at least one polygon")]
    MissingPolygons,
    #[error("manual and clustering annotation require an embedding")]
    MissingEmbedding,
    #[error("k = {k} is invalid for {n} points (need 2 <= k <= n)")]
    BadK { k: usize, n: usize },
    #[error("polygon cluster ids must form 0..K-1 (missing {0})")]
    NonContiguousClusterIds(i64),
    #[error("polygon for cluster {0} has fewer than 3 vertices")]
    DegeneratePolygon(i64),
    #[error("cluster {0} contains no points")]
    EmptyCluster(i64),
    #[error("invalid cluster assignment: {0}")]
    InvalidAssignment(String),
}

/// Errors raised by the probability model and the Shapley estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("need at least 2 non-empty clusters (got {0})")]
    TooFewClusters(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cluster {cluster} has {size} members; at least 2 are needed to split")]
    ClusterTooSmall { cluster: usize, size: usize },
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("coalition of size {size} is a boundary coalition for m = {m}")]
    BoundaryCoalition { m: usize, size: usize },
    #[error("coalition budget {0} is too small (need >= 2)")]
    BadBudget(usize),
    #[error("exact Shapley values need m <= {max} features (got {m})")]
    TooManyFeatures { m: usize, max: usize },
    #[error("reduced normal matrix is numerically singular")]
    SingularSystem,
    #[error("background set is empty")]
    EmptyBackground,
    #[error("cluster {0} is out of range")]
    BadCluster(usize),
    #[error("no explained samples")]
    EmptyCluster,
    #[error("malformed dendrogram: {0}")]
    MalformedDendrogram(String),
    #[error("histogram needs at least 2 bins (got {0})")]
    BadBins(usize),
}

/// Errors raised while persisting or validating explanation artifacts.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArtifactError {
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: String, found: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("io error: {0}")]
    IoError(String),
    #[error("malformed artifact: {0}")]
    Malformed(String),
}

/// Any error produced by the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! variant_names {
    ($ty:ident { $($variant:ident),* $(,)? }) => {
        impl $ty {
            /// Name of the variant, used on the CLI and in HTTP error bodies.
            pub fn name(&self) -> &'static str {
                #[allow(unreachable_patterns)]
                match self {
                    $($ty::$variant { .. } => stringify!($variant),)*
                }
            }
        }
    };
}

variant_names!(DataError {
    MissingFile,
    Io,
    ParseError,
    DuplicateFeatureName,
    NonNumericCell,
    EmptyDataset,
    MissingLabelColumn,
    RowCountMismatch,
    InsufficientData,
    DegenerateData,
});

variant_names!(AnnotationError {
    MissingLabels,
    MissingPolygons,
    MissingEmbedding,
    BadK,
    NonContiguousClusterIds,
    DegeneratePolygon,
    EmptyCluster,
    InvalidAssignment,
});

variant_names!(ModelError {
    TooFewClusters,
    DimensionMismatch,
    ClusterTooSmall,
    BadFraction,
    BoundaryCoalition,
    BadBudget,
    TooManyFeatures,
    SingularSystem,
    EmptyBackground,
    BadCluster,
    EmptyCluster,
    MalformedDendrogram,
    BadBins,
});

variant_names!(ArtifactError {
    SchemaVersionMismatch,
    InvariantViolation,
    IoError,
    Malformed,
});

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::Data(e) => e.name(),
            Error::Annotation(e) => e.name(),
            Error::Model(e) => e.name(),
            Error::Artifact(e) => e.name(),
        }
    }
}
