use thiserror::Error;

use crate::explorer::OnlineDataset;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD did not converge")]
    SvdNoConvergence,

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("random system generation exceeded {0} resamples")]
    ResampleCapExceeded(usize),

    #[error("exploration exceeded step cap of {cap} ({} triples collected)", partial.len())]
    StepCapExceeded {
        cap: usize,
        partial: Box<OnlineDataset>,
    },

    #[error("dataset chaining broken at triple {0}: x does not equal previous x_plus")]
    BrokenChain(usize),

    #[error("estimate is not stabilizable")]
    NotStabilizable,

    #[error(
        "Riccati iteration did not converge in {iterations} iterations (last step {residual:e})"
    )]
    RiccatiNoConvergence { iterations: usize, residual: f64 },

    #[error("Riccati solution does not stabilize the estimate (closed-loop radius {0})")]
    NotStabilized(f64),

    #[error("signal has {len} samples, fewer than Hankel depth {depth}")]
    SignalTooShort { len: usize, depth: usize },

    #[error("persistently exciting signal not found within {0} samples")]
    ExtensionCapExceeded(usize),

    #[error("identification-achieving prefix not found within {0} samples")]
    PrefixNotFound(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
