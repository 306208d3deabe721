use alloc::boxed::Box;
use alloc::string::String;

use crate::kernels::GramReport;

/// Everything that can go wrong inside the numerical core.
///
/// `SingularGram` is not a crash: it is how an explosion of the Gram
/// inverse surfaces to the driver, which may hand it to a restart hook.
#[derive(Debug, Clone, thiserror::Error)]
pub enum DolrError {
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("invalid bound input: {0}")]
    InvalidBoundInput(String),
    #[error("row Gram matrix of the deterministic basis is singular")]
    SingularRowGram,
    #[error("stochastic Gram matrix is singular (lambda_min = {:e})", .0.lambda_min)]
    SingularGram(Box<GramReport>),
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("second moment has rank {found}, at least {required} required")]
    RankDeficient { required: usize, found: usize },
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("bad model parameters: {0}")]
    BadParams(String),
    #[error(
        "assumption violated: {what} ratio {ratio:e} exceeds declared {declared:e} at t = {t}"
    )]
    AssumptionViolated {
        what: &'static str,
        ratio: f64,
        declared: f64,
        t: f64,
        x: Box<[f64]>,
        y: Box<[f64]>,
    },
    #[error("path of {requested} values exceeds the cap of {cap}")]
    OverflowingDims { requested: u128, cap: u128 },
    #[error("second moment has no eigenvalue above the restart tolerance")]
    ZeroState,
    #[error("model declares no noise floor (sigma_B = 0)")]
    NoFloorDeclared,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("Picard iterate {iterate} left the admissible set: {reason}")]
    PicardLeftBall { iterate: usize, reason: String },
    #[error("noise path exhausted at step {step}")]
    PathExhausted { step: usize },
}

pub type Result<T, E = DolrError> = core::result::Result<T, E>;
