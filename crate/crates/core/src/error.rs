use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate transform: real part norm {0:e} is below 1e-12")]
    DegenerateTransform(f64),
    #[error("degenerate blend: weighted dual-quaternion sum vanished")]
    DegenerateBlend,
    #[error("degenerate frame: forward and up directions are parallel")]
    DegenerateFrame,
    #[error("degenerate link {0}: endpoints coincide")]
    DegenerateLink(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("gradient check failed: max relative error {0:e}")]
    GradientCheck(f64),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn mismatch(what: &'static str, expected: usize, found: usize) -> Self {
        Error::LengthMismatch {
            what,
            expected,
            found,
        }
    }
}
