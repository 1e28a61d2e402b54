use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("network generation failed: no connected topology after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("domain index {0} out of range (n_domains = {1})")]
    DomainIndex(usize, usize),

    #[error("node ({0}, {1}) not found")]
    NodeNotFound(usize, usize),

    #[error("action index {0} out of range (space size {1})")]
    ActionIndex(usize, usize),

    #[error("invalid action subset: {0}")]
    InvalidAction(String),

    #[error("synchronization budget violated: |selected| = {got}, SB = {want}")]
    BudgetViolation { got: usize, want: usize },

    #[error("episode horizon exhausted (T = {0})")]
    HorizonExhausted(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient encountered (training diverged)")]
    NonFiniteGradient,

    #[error("insufficient samples in replay buffer: have {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("missing policy `{0}` in metrics")]
    MissingPolicy(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
