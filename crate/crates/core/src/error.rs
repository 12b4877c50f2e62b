use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("empty expression")]
    EmptyInput,

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid interval [{lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("level {level} exceeds the configured cap {max}")]
    LevelTooHigh { level: u32, max: u32 },

    #[error("rho violated in block: {0}")]
    RhoViolated(String),

    #[error("V does not bracket the solution: {0}")]
    NoBracket(String),

    #[error("rho not constant on U x V: {0}")]
    RhoNotConstant(String),

    #[error("base point is not on the zero set: |f(a, b)| = {value:e} > {tolerance:e}")]
    NotOnZeroSet { value: f64, tolerance: f64 },

    #[error("ill-conditioned moment matrix (condition estimate {estimate:.3e}); lower n")]
    IllConditioned { estimate: f64 },

    #[error("singular matrix")]
    Singular,

    #[error("solve residual {residual:.3e} exceeds bound {bound:.3e}")]
    Residual { residual: f64, bound: f64 },

    #[error("degenerate system: det J = {det:e} (tolerance {tolerance:e})")]
    DegenerateSystem { det: f64, tolerance: f64 },

    #[error("vanishing partial derivative of f{equation} in y{variable}")]
    VanishingPivot { equation: usize, variable: usize },

    #[error("Newton iteration did not converge: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error("block {index:?}: {source}")]
    Block {
        index: Vec<usize>,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage and block annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Block { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
