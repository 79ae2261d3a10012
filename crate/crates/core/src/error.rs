use std::path::PathBuf;

use thiserror::Error;

use crate::projection::ProjectionReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("a network needs at least one non-anchor node")]
    NoSensors,
    #[error("a network needs at least one anchor")]
    NoAnchors,
    #[error("sensing radius must be finite and non-negative, got {0}")]
    BadRadius(f64),
    #[error("expected {expected}-dimensional coordinates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("ground truth has {found} positions but the network has {expected} sensors")]
    GroundTruthLength { expected: usize, found: usize },
    #[error("ground truth positions are required")]
    GroundTruthRequired,
    #[error("{anchors} anchors cannot pin a frame in R^{dimension} (need at least {})", dimension + 1)]
    TooFewAnchors { dimension: usize, anchors: usize },
    #[error("framework is not generically rigid")]
    NotRigid,
    #[error("box for sensor {sensor} is empty or unbounded")]
    BadBox { sensor: usize },
    #[error("{0} boxes given for {1} sensors")]
    BoxCount(usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("node {0} is an anchor, not a player")]
    NotAPlayer(usize),
}

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("spectrahedron projection did not converge in {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    MaxInnerIterations(Box<ProjectionReport>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid search over {0} coordinates is too large (limit 6)")]
    TooLarge(usize),
    #[error("grid resolution must be at least 10, got {0}")]
    ResolutionTooLow(usize),
    #[error("deviation probe needs at least one sample")]
    NoSamples,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV row {row}: {message}")]
    Ingest { row: usize, message: String },
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported schema version {0} (expected 1)")]
    SchemaVersion(u32),
    #[error("scenario is inconsistent: {0}")]
    Invalid(String),
}

/// Top-level error for drivers and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("sweep needs at least one network size")]
    EmptySweep,
    #[error("no rigid instance for N={sensors} after {attempts} attempts")]
    RigidityGenerationFailed { sensors: usize, attempts: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
