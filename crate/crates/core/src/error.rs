use alloc::string::String;

/// Why an expression could not be evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    NonFinite,
}

impl core::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogNonPositive => "logarithm of a non-positive number",
            DomainKind::SqrtNegative => "square root of a negative number",
            DomainKind::NonFinite => "non-finite result",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("invalid coordinate name `{0}`")]
    InvalidCoordinateName(String),
    #[error("domain error: {0}")]
    Domain(DomainKind),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("singular metric (|det g| = {det:e})")]
    SingularMetric { det: f64 },
    #[error("metric determinant {det:e} has the wrong sign for the declared signature")]
    SignatureMismatch { det: f64 },
    #[error("metric is not symmetric at entry ({row}, {col})")]
    AsymmetricMetric { row: usize, col: usize },
    #[error("unknown catalog name `{0}`")]
    UnknownCatalogName(String),
    #[error("degenerate frame (|det f| = {det:e})")]
    DegenerateFrame { det: f64 },
    #[error("unsupported tensor valence ({upper}, {lower})")]
    UnsupportedValence { upper: usize, lower: usize },
    #[error("region extent must be positive")]
    NonPositiveExtent,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("coincidence limit violated (residual {residual:e})")]
    CoincidenceViolation { residual: f64 },
    #[error("tabulated factor is singular")]
    SingularFactor,
    #[error("flow left the chart domain at lambda = {lambda}")]
    FlowLeftDomain { lambda: f64 },
    #[error("frame is anholonomic (max |C| = {max:e})")]
    NonzeroAnholonomicity { max: f64 },
    #[error("frame is not divergence free (max |div| = {max:e})")]
    NonzeroDivergence { max: f64 },
    #[error("coframe line integral depends on the path (deviation {deviation:e})")]
    PathDependence { deviation: f64 },
    #[error("singular coordinate jacobian")]
    SingularJacobian,
    #[error("jacobian minors vanish at the seed point")]
    DegenerateMinors,
    #[error("characteristic curve left the working domain")]
    CharacteristicsLeftDomain,
    #[error("affine fit system is singular")]
    SingularFit,
    #[error("inverse coordinate map did not converge (residual {residual:e})")]
    InverseDidNotConverge { residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
