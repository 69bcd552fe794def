use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partition needs at least one atom")]
    EmptyPartition,

    #[error("breakpoints must increase strictly from 0 to 1: {0}")]
    BadBreakpoints(String),

    #[error("grading ratio must be finite and >= 1, got {0}")]
    BadGrading(f64),

    #[error("mesh threshold must be positive, got {0}")]
    BadMeshThreshold(f64),

    #[error("density must be positive on [0, 1]: {0}")]
    BadDensity(String),

    #[error("unknown function family '{0}'")]
    UnknownFamily(String),

    #[error("bad parameters for family '{family}': {why}")]
    BadFamilyParams { family: String, why: String },

    #[error("quadrature interval is inverted: [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },

    #[error("quadrature rule needs at least one point")]
    BadPointCount,

    #[error("spline order must be >= 1, got {0}")]
    BadOrder(usize),

    #[error("invalid knot sequence: {0}")]
    BadKnots(String),

    #[error("evaluation point {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("index {index} out of range for basis of size {count}")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("weight system mismatch: expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },

    #[error("weight system is not admissible: {0}")]
    BrokenWeightSystem(String),

    #[error("derivative order {order} not available for kernel of order {kernel}")]
    KernelDerivative { order: usize, kernel: usize },

    #[error("dual index {0} out of range")]
    DualIndex(usize),

    #[error("bases are not aligned: {0}")]
    BasisMismatch(String),

    #[error("matrix is singular or too ill-conditioned: {0}")]
    Singular(String),

    #[error("decay fit failed: {0}")]
    DecayFitFailed(String),

    #[error("partition is not a refinement of the coarse one")]
    NotRefinement,

    #[error("trace partitions differ on the requested region: {0}")]
    TraceMismatch(String),

    #[error("measure must be given by a density for this construction")]
    DensityRequired,
}
