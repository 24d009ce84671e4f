use thiserror::Error;

/// Errors shared across the toolkit. Budget outcomes (chase exhaustion,
/// UNKNOWN verdicts) are encoded in result types, not here.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("arity mismatch: {pred} used with {got} arguments, declared {declared}")]
    ArityMismatch {
        pred: String,
        got: usize,
        declared: usize,
    },
    #[error("predicate {0} is not declared in the schema")]
    UndeclaredPredicate(String),
    #[error("unsafe rule: head variable {var} does not occur in the body")]
    UnsafeRule { var: String },
    #[error("non-Boolean query where a Boolean one is required")]
    NonBooleanQuery,
    #[error("unsupported rule class: {0}")]
    UnsupportedClass(String),
    #[error("rewriting saturation budget of {0} disjuncts exceeded")]
    SaturationBudget(usize),
    #[error("view {0} does not have a CQ definition")]
    NonCqView(String),
    #[error("constraints are not all full TGDs")]
    NonFullSigma,
    #[error("view {0} has a Datalog definition and cannot be expanded")]
    DatalogViewUnexpandable(String),
    #[error("Datalog-defined view {0} is not allowed here")]
    DatalogViewHere(String),
    #[error("constraints are not frontier-guarded")]
    NotFrontierGuarded,
    #[error("tree code violates coherence condition {0}")]
    Incoherent(u8),
    #[error("decomposition width {got} exceeds code width {max}")]
    WidthExceeded { got: usize, max: usize },
    #[error("invalid tree decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("automaton and code disagree on alphabet parameters: {0}")]
    AlphabetMismatch(String),
    #[error("backV fan-out exceeds the configured limit of {0}")]
    FanoutLimit(usize),
    #[error("schema too large for brute-force enumeration: {0} candidate facts")]
    SchemaTooLarge(usize),
    #[error("machine spec is nondeterministic: {0}")]
    NondeterministicSpec(String),
    #[error("tiling spec has an empty tile set")]
    EmptyTileset,
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
