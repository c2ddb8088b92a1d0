use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("ensemble has no spins")]
    EmptyEnsemble,

    #[error("unknown coupling profile `{0}`")]
    UnknownProfile(String),

    #[error("winding number difference {winding} aliases on a {n_spins}-spin geometry (limit N/2)")]
    Aliasing { winding: i64, n_spins: usize },

    #[error("mode crosstalk {found:.3e} exceeds budget {budget:.3e}")]
    CrosstalkBudget { found: f64, budget: f64 },

    #[error("gradient pulse needs |dB| = {required:.4e} T, hardware limit is {limit:.4e} T")]
    GradientLimit { required: f64, limit: f64 },

    #[error("amplitude {amplitude:.3e} leaves the {max_excitations}-excitation sector")]
    SectorOverflow { max_excitations: u8, amplitude: f64 },

    #[error("truncation overflow in {mode} (amplitude {amplitude:.3e})")]
    TruncationOverflow { mode: String, amplitude: f64 },

    #[error("unsupported segment for this engine: {0}")]
    UnsupportedSegment(String),

    #[error("op {index} ({op}) failed: {source}")]
    Program {
        index: usize,
        op: String,
        source: Box<Error>,
    },

    #[error("conditional-phase calibration residual {0:.3e} exceeds 1e-6")]
    Calibration(f64),

    #[error("schedule parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("degenerate sweep grid: {0}")]
    DegenerateGrid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
