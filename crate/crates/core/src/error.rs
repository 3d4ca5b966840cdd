use thiserror::Error;

/// Failure modes of the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("point outside the cross-section: {0}")]
    Domain(String),
    #[error("energy {z} coincides with the transverse threshold nu_{index}")]
    Threshold { z: f64, index: usize },
    #[error("kernel evaluated at coincident points")]
    Singularity,
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("energy {z} is a pole: {what}")]
    Pole { z: f64, what: String },
    #[error("search range: {0}")]
    Range(String),
    #[error("boundary-value extraction failed: {0}")]
    Extraction(String),
    #[error("site configuration breaks the declared mirror symmetry: {0}")]
    SymmetryViolation(String),
    #[error("no bound state: {0}")]
    NoBoundState(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("ambiguous band linking between theta = {theta_a} and theta = {theta_b}; refine the grid")]
    BandLinking { theta_a: f64, theta_b: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
