use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot project a zero vector onto the sphere (|p| = {0:e})")]
    ZeroVector(f64),
    #[error("vectors are not tangent at u (|<X,u>| = {0:e})")]
    NotTangent(f64),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("region out of range: {0}")]
    RegionOutOfRange(String),
    #[error("field does not match grid: {0}")]
    ShapeMismatch(String),
    #[error("solver diverged at iteration {0}")]
    Diverged(usize),
    #[error("non-finite energy at iteration {0}")]
    NonFiniteEnergy(usize),
    #[error("solve {index} of the continuation failed: {source}")]
    Continuation { index: usize, source: Box<Error> },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("field is constant (max |grad u| = {0:e})")]
    ConstantField(f64),
    #[error("more than one concentration point detected ({0} candidates)")]
    MultipleConcentrations(usize),
    #[error("window of radius {0} does not fit inside the chart")]
    WindowOutOfChart(f64),
    #[error("unsupported schedule form: {0}")]
    UnsupportedForm(String),
    #[error("schedule violates the bound on (eps/r^2) log(1/r): {0}")]
    ViolatesCorollaryBound(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid mu = {0} (must be >= 1)")]
    InvalidMu(f64),
    #[error("bubble biharmonic energy must be positive, got {0}")]
    DegenerateBubble(f64),
    #[error("rational map has a pole on grid node {0}")]
    PoleOnGrid(usize),
    #[error("invalid bubble degree: {0}")]
    InvalidDegree(String),
    #[error("antipodal endpoints need an explicit winding count")]
    AntipodalEndpoints,
    #[error("incompatible glue endpoints: {0}")]
    IncompatibleEndpoints(String),
    #[error("schedule exhausts grid at k = {k}: bubble cut {radius:e} is below 4 grid cells")]
    ScheduleExhaustsGrid { k: usize, radius: f64 },
    #[error("field file format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
