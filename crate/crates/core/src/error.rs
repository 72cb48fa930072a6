use thiserror::Error;

/// Errors raised by the numerical kernels and the command-line layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular contact form at {at:?}: stacked system has rank {rank} < {dim}")]
    SingularForm { at: Vec<f64>, rank: usize, dim: usize },

    #[error("degenerate contact form: |volume density| = {density:e} at {at:?}")]
    Degenerate { at: Vec<f64>, density: f64 },

    #[error("defining-equation residual {residual:e} exceeds tolerance {tol:e} at {at:?}")]
    Residual { at: Vec<f64>, residual: f64, tol: f64 },

    #[error("derivative unavailable: {0}")]
    DerivativeFailure(String),

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("contact form has non-positive mass {0:e}")]
    NonPositiveMass(f64),

    #[error("representation mismatch: {0}")]
    RepresentationMismatch(String),

    #[error("RK4 step left the nondegeneracy region at {at:?}")]
    StepTooLarge { at: Vec<f64> },

    #[error("map is not a contactomorphism: xi-defect {defect:e} > {tol:e}")]
    NotContactomorphism { defect: f64, tol: f64 },

    #[error("targets not attainable: {0}")]
    NotAttainable(String),

    #[error("exponent overflow: {0}")]
    Overflow(String),

    #[error("measure is not invariant: defect {defect:e} > {tol:e}")]
    NotInvariant { defect: f64, tol: f64 },

    #[error("Bowen ball around {center:?} (N = {n}) contains no grid node; refine the resolution or enlarge eps")]
    EmptyBall { center: Vec<f64>, n: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("cannot parse expression `{0}`")]
    UnknownExpression(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("unknown subcommand `{0}`")]
    UnknownSubcommand(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Validation failures are the user's inputs being mathematically
    /// unacceptable, as opposed to internal faults.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
