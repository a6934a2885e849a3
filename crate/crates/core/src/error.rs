use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("gradient vanishes at the base point (|grad F| = {grad_norm:e})")]
    SingularPoint { grad_norm: f64 },

    #[error("tangent frames do not match: solve residual {residual:e}")]
    FrameMismatch { residual: f64 },

    #[error("area form charts disagree: {first} vs {second}")]
    ChartDisagreement { first: f64, second: f64 },

    #[error("real input required: {0}")]
    NonReal(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no compact component found: {0}")]
    NoCompactComponent(String),

    #[error("rejection envelope violated at ({x}, {y}, {z}): density {density} exceeds bound {bound}")]
    EnvelopeViolation {
        x: f64,
        y: f64,
        z: f64,
        density: f64,
        bound: f64,
    },

    #[error("invalid step distribution: {0}")]
    InvalidDistribution(String),

    #[error("walk left the compact box at step {step}")]
    Escape { step: usize },

    #[error("point is not near infinity (max modulus {max_modulus})")]
    NotNearInfinity { max_modulus: f64 },

    #[error("graph-function Newton iteration diverged: {iterates:?}")]
    NewtonDivergence { iterates: Vec<f64> },

    #[error("letter {letter} is not defined near its indeterminacy vertex {chart}")]
    Indeterminacy { letter: char, chart: &'static str },

    #[error("escape certificate failed at step {step}: {reason}")]
    CertificateFailure { step: usize, reason: String },

    #[error("two distinct orbit points closer than {distance:e}; tighten the arithmetic")]
    ToleranceCollision { distance: f64 },

    #[error("orbit point overflowed (max modulus {max_modulus:e})")]
    OrbitOverflow { max_modulus: f64 },

    #[error("fiber map is parabolic or hyperbolic at x0 = {x0} (trace {trace})")]
    ParabolicBoundary { x0: f64, trace: f64 },

    #[error("running product reduces to the identity at step {step}")]
    EmptyReduction { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
