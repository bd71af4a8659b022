use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("coefficient shape does not match the plan: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("signal length {length} is not a multiple of {multiple}; pad to {padded}")]
    NeedsPadding {
        length: usize,
        multiple: usize,
        padded: usize,
    },

    #[error("invalid gap specification: {0}")]
    InvalidGaps(String),

    #[error("insufficient context around gap at sample {start}: need {needed} reliable samples per side, have {available}")]
    InsufficientContext {
        start: usize,
        needed: usize,
        available: usize,
    },

    #[error("reference has zero energy over the evaluated region")]
    ZeroEnergyReference,

    #[error("signal of {length} samples is shorter than one analysis frame ({frame})")]
    SignalTooShort { length: usize, frame: usize },

    #[error("non-finite state at sampler step {step}")]
    NonFinite { step: usize },

    #[error("non-finite training loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
