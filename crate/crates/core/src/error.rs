use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqqError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("equal-product amplitudes (A1*B1 == A2*B2) have no Gamma closed form")]
    EqualProduct,

    #[error("peakon collision: |q1 - q2| fell below tolerance between t = {t_before} and t = {t_after}")]
    Collision { t_before: f64, t_after: f64 },

    #[error("coincident peak positions q1 = q2 = {0}")]
    CoincidentPeaks(f64),

    #[error("test function support [{lo}, {hi}] plus kernel radius leaves the quadrature window")]
    SupportOutsideWindow { lo: f64, hi: f64 },

    #[error("hypothesis violated: {which} = {value} at node {node} (x = {x})")]
    Hypothesis {
        which: &'static str,
        node: usize,
        x: f64,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("blow-up design search exhausted after {tried} candidates")]
    SearchExhausted { tried: usize },

    #[error("CFL collapse at t = {t}: max|W| = {max_w}")]
    CflCollapse { t: f64, max_w: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl SqqError {
    /// Process exit code: 3 for numerical breakdown, 4 for anything the
    /// caller could fix by changing the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            SqqError::NonFinite { .. } | SqqError::CflCollapse { .. } => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, SqqError>;

pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SqqError::NonFinite { what, index }),
        None => Ok(()),
    }
}
