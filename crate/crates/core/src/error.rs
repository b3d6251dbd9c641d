use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dose must be a finite non-negative number, got {0}")]
    InvalidDose(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("gradient at ({c}, {d}) is not in the range of the information matrix (relative residual {residual:.3e})")]
    Range { c: f64, d: f64, residual: f64 },
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("response surface is flat over the region (range {0:e})")]
    DegenerateSurface(f64),
    #[error("no dose attains the requested fraction of the maximal effect")]
    NoSolution,
    #[error("no contour points for any requested level")]
    EmptyContour,
    #[error("ray design {mono}/{combo} is not available (supported: 3/2, 3/3, 4/2, 4/4)")]
    UnsupportedRay { mono: usize, combo: usize },
    #[error("total sample size {total} is smaller than the support size {support}")]
    TooFewObservations { total: usize, support: usize },
    #[error("no particle yields a design with estimable contours")]
    NoFeasibleDesign,
    #[error("prior component {index}: {source}")]
    Prior { index: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn design(msg: impl Into<String>) -> Self {
        Error::InvalidDesign(msg.into())
    }

    pub fn is_range(&self) -> bool {
        match self {
            Error::Range { .. } => true,
            Error::Prior { source, .. } => source.is_range(),
            _ => false,
        }
    }
}
