use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("payload of {0} bits does not fit a 32-bit length header")]
    PayloadTooLong(usize),

    #[error("frame declares {declared} payload bits but only {available} are available")]
    TruncatedFrame { declared: usize, available: usize },

    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("condition {id} out of range for condition space of {space}")]
    ConditionOutOfRange { id: u32, space: u32 },

    #[error("token {token} at step {step} is not in the truncated support")]
    TokenNotInSupport { step: usize, token: u32 },

    #[error("degenerate codebook: minimum pairwise distance {0:e}")]
    DegenerateCodebook(f64),

    #[error("codebook index {index} out of range for codebook of {size}")]
    IndexOutOfRange { index: u32, size: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("optimization diverged: non-finite loss at step {0}")]
    NonFiniteLoss(usize),

    #[error("malformed error-correction stream: {0}")]
    MalformedEcc(String),

    #[error("error-correction payload of {needed} bits exceeds text capacity of {available} bits")]
    BudgetExceeded { needed: usize, available: usize },

    #[error("message needs {needed} bits but the image channel carried only {available}")]
    CapacityExceeded { needed: usize, available: usize },

    #[error("message only partly recovered: {recovered} bits before extraction stopped")]
    PartialRecovery { recovered: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for malformed input, 1 for any other pipeline failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidKey(_)
            | Error::InvalidConfig(_)
            | Error::MalformedInput(_)
            | Error::ShapeMismatch(_)
            | Error::Json(_) => 2,
            _ => 1,
        }
    }
}
