use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not certify {what} within {max_guard_bits} guard bits")]
    PrecisionExhausted {
        what: &'static str,
        max_guard_bits: u32,
    },

    #[error("alias masses sum to {got} units, expected 2^{ell}")]
    MassMismatch { got: String, ell: u32 },

    #[error("threshold precision of {0} fractional bits exceeds the 126-bit table limit")]
    PrecisionTooWide(u32),

    #[error("item {item} outside domain [1, {d}]")]
    ItemOutOfRange { item: u64, d: u64 },

    #[error("count {t} outside [0, {n}]")]
    CountOutOfRange { t: u64, n: u64 },

    #[error("instance too large for exact enumeration: {0}")]
    EnumerationLimit(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
