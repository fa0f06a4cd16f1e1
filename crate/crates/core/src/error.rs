use thiserror::Error;

/// Errors from group element construction and arithmetic.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("element family {element} does not match descriptor family {descriptor}")]
    FamilyMismatch {
        descriptor: &'static str,
        element: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate overflow in checked 64-bit arithmetic")]
    Overflow,
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
}

#[derive(Debug, Error, Clone)]
pub enum MeasureError {
    #[error("descriptor mismatch between measures")]
    DescriptorMismatch,
    #[error("measure is not a probability measure: {0}")]
    NotProbability(String),
    #[error("convolution support exceeded cap of {cap} atoms")]
    SupportCapExceeded { cap: usize },
    #[error("builder does not apply to this group family: {0}")]
    FamilyMismatch(String),
    #[error("invalid builder parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Debug, Error, Clone)]
pub enum EigenError {
    #[error("descriptor is not polycyclic")]
    NotPolycyclic,
    #[error("eigenvalue with non-real or non-positive part beyond tolerance: {0}")]
    BadEigenvalue(String),
    #[error("no sign-normalized dominant eigenvector with all positive coordinates")]
    NoPositiveEigenvector,
    #[error("eigen residual {residual} exceeds tolerance {tol}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Debug, Error, Clone)]
pub enum WalkError {
    #[error("observer incompatible with walk family: {0}")]
    ObserverMismatch(String),
    #[error("measure atom not representable as a walk increment: {0}")]
    BadIncrement(String),
    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<WalkError>,
    },
    #[error("invalid walk configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}
