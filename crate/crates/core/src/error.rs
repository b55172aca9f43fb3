use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("number of time steps must be even, got {0}")]
    OddN(usize),

    #[error("axis {axis} has {nodes} nodes, cubic splines need at least 4")]
    TooFewNodes { axis: usize, nodes: usize },

    #[error("diffusion matrix is singular at t={t}, x={x:?}")]
    SingularDiffusion { t: f64, x: Vec<f64> },

    #[error("Gauss-Hermite order {0} outside 1..=64")]
    OrderOutOfRange(usize),

    #[error("integrand is not finite at quadrature point {point:?}")]
    NonFiniteSample { point: Vec<f64> },

    #[error("forward scheme {scheme} needs {what}, which the problem does not provide")]
    MissingDerivative {
        scheme: &'static str,
        what: &'static str,
    },

    #[error("Picard iteration diverged at level {level}: residual {residual:e} after {iters} sweeps")]
    PicardDiverged {
        level: usize,
        residual: f64,
        iters: usize,
    },

    #[error("degenerate Heston parameters: {0}")]
    DegenerateParameters(&'static str),

    #[error("Heston truncation box must stay above zero, got lower bound {0}")]
    BoxTouchesZero(f64),

    #[error("rate fit needs at least 2 points, got {0}")]
    InsufficientPoints(usize),

    #[error("rate fit needs positive errors and steps, got {0:e}")]
    NonPositiveError(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("level {level}, node {node}: {source}")]
    AtNode {
        level: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("N={n}: {source}")]
    AtResolution {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

impl Error {
    /// Variant name, printed by the CLI as the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::OddN(_) => "OddN",
            Error::TooFewNodes { .. } => "TooFewNodes",
            Error::SingularDiffusion { .. } => "SingularDiffusion",
            Error::OrderOutOfRange(_) => "OrderOutOfRange",
            Error::NonFiniteSample { .. } => "NonFiniteSample",
            Error::MissingDerivative { .. } => "MissingDerivative",
            Error::PicardDiverged { .. } => "PicardDiverged",
            Error::DegenerateParameters(_) => "DegenerateParameters",
            Error::BoxTouchesZero(_) => "BoxTouchesZero",
            Error::InsufficientPoints(_) => "InsufficientPoints",
            Error::NonPositiveError(_) => "NonPositiveError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::AtNode { source, .. } | Error::AtResolution { source, .. } => source.class(),
            Error::IoFailure(_) => "IoFailure",
        }
    }

    /// Strips node/resolution context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } | Error::AtResolution { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::IoFailure(std::io::Error::other(e))
    }
}
