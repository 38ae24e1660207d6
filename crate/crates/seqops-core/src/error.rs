use alloc::string::String;
use core::fmt;

/// Errors surfaced by the core modules.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A vector or matrix had the wrong shape.
    DimensionMismatch { expected: usize, got: usize },
    /// A constructor or operation argument violated its contract.
    InvalidArgument { what: &'static str, detail: String },
    /// An action index fell outside `[0, K)`.
    ActionOutOfRange { action: usize, num_actions: usize },
    /// The noise level must satisfy `0 <= eps < 0.5` so the optimal action
    /// stays uniquely best.
    NoiseOutOfRange(f64),
    /// A propensity row did not sum to one within tolerance.
    PropensityRowSum { sum: f64, tolerance: f64 },
    /// A logged propensity was zero or negative (common support violated).
    NonPositivePropensity(f64),
    /// The regularizer's λ was outside its admissible range.
    LambdaOutOfRange { lambda: f64, kind: &'static str },
    /// An operation that needs data was handed an empty dataset.
    EmptyDataset,
    /// A per-interaction quantity (target propensity, behavior risk) was
    /// missing for some record.
    MissingPerRecordInput { expected: usize, got: usize },
    /// A context was queried against a table-backed environment that has no
    /// label for it.
    UnknownContext,
    /// The drift schedule was queried past its last defined round.
    DriftRoundOutOfRange { round: usize, defined: usize },
    /// The objective became non-finite during optimization.
    NonFiniteObjective { epoch: usize, value: f64 },
    /// A diagnostics precondition failed (zero coverage or zero margin).
    DegenerateDiagnostic(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            CoreError::InvalidArgument { what, detail } => {
                write!(f, "invalid {what}: {detail}")
            }
            CoreError::ActionOutOfRange { action, num_actions } => {
                write!(f, "action {action} out of range for {num_actions} actions")
            }
            CoreError::NoiseOutOfRange(eps) => {
                write!(f, "noise eps must lie in [0, 0.5), got {eps}")
            }
            CoreError::PropensityRowSum { sum, tolerance } => {
                write!(f, "propensity row sums to {sum}, off by more than {tolerance}")
            }
            CoreError::NonPositivePropensity(q) => {
                write!(f, "logged propensity must be positive, got {q}")
            }
            CoreError::LambdaOutOfRange { lambda, kind } => {
                write!(f, "lambda {lambda} out of range for {kind}")
            }
            CoreError::EmptyDataset => write!(f, "dataset is empty"),
            CoreError::MissingPerRecordInput { expected, got } => {
                write!(f, "expected {expected} per-record values, got {got}")
            }
            CoreError::UnknownContext => {
                write!(f, "context not present in the table-backed environment")
            }
            CoreError::DriftRoundOutOfRange { round, defined } => {
                write!(f, "drift schedule defined for rounds [0, {defined}), queried {round}")
            }
            CoreError::NonFiniteObjective { epoch, value } => {
                write!(f, "objective became non-finite at epoch {epoch}: {value}")
            }
            CoreError::DegenerateDiagnostic(what) => {
                write!(f, "diagnostic precondition failed: {what}")
            }
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
