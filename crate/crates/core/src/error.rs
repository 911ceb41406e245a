use alloc::string::String;

/// Errors raised by the tensor engine and the model stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not satisfy an operation's contract.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its contract (e.g. backward on a
    /// non-scalar root).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A masked reduction found zero valid pixels.
    #[error("empty valid mask in {0}")]
    EmptyMask(&'static str),

    /// A NaN or infinity appeared where the contract requires finite values.
    #[error("non-finite value detected in {0}")]
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
