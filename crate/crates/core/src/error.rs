use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report. Each variant maps to a stable
/// class name (see [`Error::class`]) that is surfaced on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed delimited text. `row` is the 1-based line number, header = 1.
    Parse { row: usize, message: String },
    EmptyData,
    Schema(String),
    AllMissing(String),
    UnknownVariable(String),
    FormulaSyntax(String),
    FormulaSemantic(String),
    NonContinuousResponse(String),
    DegenerateFactor(String),
    InsufficientData(String),
    /// The named design column is a linear combination of earlier columns.
    RankDeficient { column: String },
    Convergence { iterations: usize, deviance_trace: Vec<f64> },
    FamilyDomain(String),
    Domain(String),
    IncomparableModels(String),
    NotInModel(String),
    Kind(String),
    Covariance(String),
    UnresolvedMention(String),
    AmbiguousMention { mention: String, candidates: Vec<String> },
    SchemaViolation(String),
    Cancelled,
}

impl Error {
    pub fn class(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::EmptyData => "EmptyDataError",
            Error::Schema(_) => "SchemaError",
            Error::AllMissing(_) => "AllMissingError",
            Error::UnknownVariable(_) => "UnknownVariableError",
            Error::FormulaSyntax(_) => "FormulaSyntaxError",
            Error::FormulaSemantic(_) => "FormulaSemanticError",
            Error::NonContinuousResponse(_) => "NonContinuousResponseError",
            Error::DegenerateFactor(_) => "DegenerateFactorError",
            Error::InsufficientData(_) => "InsufficientDataError",
            Error::RankDeficient { .. } => "RankDeficientError",
            Error::Convergence { .. } => "ConvergenceError",
            Error::FamilyDomain(_) => "FamilyDomainError",
            Error::Domain(_) => "DomainError",
            Error::IncomparableModels(_) => "IncomparableModelsError",
            Error::NotInModel(_) => "NotInModelError",
            Error::Kind(_) => "KindError",
            Error::Covariance(_) => "CovarianceError",
            Error::UnresolvedMention(_) => "UnresolvedMentionError",
            Error::AmbiguousMention { .. } => "AmbiguousMentionError",
            Error::SchemaViolation(_) => "SchemaViolation",
            Error::Cancelled => "CancelledError",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { row, message } => write!(f, "parse error at row {row}: {message}"),
            Error::EmptyData => write!(f, "the data contains a header but no rows"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::AllMissing(col) => write!(f, "column '{col}' has no non-missing values"),
            Error::UnknownVariable(name) => write!(f, "unknown variable '{name}'"),
            Error::FormulaSyntax(msg) => write!(f, "formula syntax error: {msg}"),
            Error::FormulaSemantic(msg) => write!(f, "invalid formula: {msg}"),
            Error::NonContinuousResponse(name) => {
                write!(f, "response '{name}' must be a continuous variable")
            }
            Error::DegenerateFactor(name) => write!(
                f,
                "categorical variable '{name}' has fewer than two observed levels"
            ),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::RankDeficient { column } => write!(
                f,
                "design matrix is rank deficient: column '{column}' is linearly dependent on earlier columns"
            ),
            Error::Convergence { iterations, deviance_trace } => write!(
                f,
                "fit did not converge after {iterations} iterations (last deviance {:?})",
                deviance_trace.last()
            ),
            Error::FamilyDomain(msg) => write!(f, "family domain error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::IncomparableModels(msg) => write!(f, "models are not comparable: {msg}"),
            Error::NotInModel(name) => write!(f, "variable '{name}' is not in the model"),
            Error::Kind(msg) => write!(f, "wrong variable kind: {msg}"),
            Error::Covariance(msg) => write!(f, "covariance error: {msg}"),
            Error::UnresolvedMention(m) => write!(f, "could not match '{m}' to any variable"),
            Error::AmbiguousMention { mention, candidates } => write!(
                f,
                "'{mention}' could refer to any of: {}",
                candidates.join(", ")
            ),
            Error::SchemaViolation(msg) => write!(f, "translation reply rejected: {msg}"),
            Error::Cancelled => write!(f, "the fit was cancelled"),
        }
    }
}

impl std::error::Error for Error {}
