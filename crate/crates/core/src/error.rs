use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown catalog geometry `{0}`")]
    UnknownGeometry(String),
    #[error("invalid geometry parameters: {0}")]
    InvalidParameters(String),
    #[error("perturbation t = {t} exceeds t_max = {t_max} for degree {degree}")]
    PerturbationTooLarge { t: f64, t_max: f64, degree: u32 },
    #[error("point outside every chart")]
    OutsideCharts,
    #[error("grid resolution below minimum: {0}")]
    ResolutionTooLow(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero volume coefficient in Berezin integral")]
    ZeroVolume,
    #[error("degenerate curvature at the requested point")]
    DegenerateCurvature,
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("Gram matrix numerically singular (pivot {pivot:e} at step {step})")]
    SingularGram { step: usize, pivot: f64 },
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("no extremal: B_θ(x) vanishes")]
    NoExtremal,
    #[error("zero total mass")]
    ZeroMass,
    #[error("rate fit needs at least 4 positive entries: {0}")]
    BadSeries(String),
    #[error("empty point set")]
    EmptyPointSet,
    #[error("symbol expression: {0}")]
    Symbol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
