use alloc::string::String;
use core::fmt;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input violates a structural requirement (empty measure, bad mass, ...).
    Domain(String),
    /// Two objects that must share a dimension do not.
    DimensionMismatch { expected: usize, found: usize },
    /// The operation is only defined in a specific dimension.
    UnsupportedDimension { required: usize, found: usize },
    /// Invalid configuration value, such as `p < 1` or `lambda <= 0`.
    Config(String),
    /// The gradient is requested at a point where the energy is not differentiable.
    NonSmooth { vertex: usize, atom: usize },
    /// A non-finite value appeared during optimization.
    Numeric { iteration: usize, detail: String },
    /// The brute-force oracle refused an instance that exceeds its budget.
    BudgetExceeded { required: u64, budget: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::UnsupportedDimension { required, found } => {
                write!(f, "operation requires dimension {required}, got {found}")
            }
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NonSmooth { vertex, atom } => write!(
                f,
                "energy is not differentiable: atom {atom} coincides with vertex {vertex}; \
                 use the stationarity report instead"
            ),
            Error::Numeric { iteration, detail } => {
                write!(f, "numeric failure at iteration {iteration}: {detail}")
            }
            Error::BudgetExceeded { required, budget } => {
                write!(f, "oracle budget exceeded: {required} evaluations required, budget is {budget}")
            }
        }
    }
}

impl core::error::Error for Error {}
