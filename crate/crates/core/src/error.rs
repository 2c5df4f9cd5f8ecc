use alloc::string::String;
use num_bigint::BigUint;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("arity must be at least 2, got {0}")]
    InvalidArity(usize),

    #[error("arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("invalid {what}: {detail}")]
    InvalidParameter { what: &'static str, detail: String },

    #[error("enumerating {count} trees exceeds the cap of {cap}")]
    CapExceeded { count: BigUint, cap: u64 },

    #[error("exact evaluation needs {work:.3e} operations, over the budget of {budget:.3e}")]
    BudgetExceeded { work: f64, budget: f64 },

    #[error("branching population {branching} exceeds the {population} agents")]
    PopulationTooSmall { branching: u64, population: u64 },

    #[error("the leaf-only tree has no first node to decompose")]
    EmptyTree,

    #[error("agent {agent} is outside a population of {population}")]
    UnknownAgent { agent: usize, population: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter { what, detail: detail.into() }
    }

    /// True for errors raised because a requested computation is too large,
    /// as opposed to malformed input.
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::CapExceeded { .. } | Error::BudgetExceeded { .. })
    }
}

pub(crate) fn check_arity(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidArity(m));
    }
    Ok(())
}

pub(crate) fn check_time(what: &'static str, t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(what, alloc::format!("must be finite and non-negative, got {t}")));
    }
    Ok(())
}
