use core::fmt;

use crate::arena::AllocId;

/// Errors that are not memory-safety verdicts: configuration mistakes,
/// scenario-authoring errors and internal bookkeeping bugs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Error {
    ZeroSizeAlloc,
    /// `offset + n` left the offset range.
    OffsetOverflow,
    UnknownAllocation(AllocId),
    AlreadyInstalled(AllocId),
    NotInstalled(AllocId),
    RedzoneTooSmall,
    /// memcpy source and destination overlap.
    OverlappingCopy,
    /// The run exceeded its checked-access budget.
    BudgetExhausted(u64),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroSizeAlloc => f.write_str("allocation size must be at least 1 byte"),
            Error::OffsetOverflow => f.write_str("reference offset arithmetic overflowed"),
            Error::UnknownAllocation(id) => write!(f, "unknown allocation {id}"),
            Error::AlreadyInstalled(id) => write!(f, "metadata for allocation {id} already installed"),
            Error::NotInstalled(id) => write!(f, "no live metadata for allocation {id}"),
            Error::RedzoneTooSmall => f.write_str("redzone width must be at least 1"),
            Error::OverlappingCopy => f.write_str("memcpy source and destination overlap"),
            Error::BudgetExhausted(n) => write!(f, "access budget of {n} exhausted"),
        }
    }
}

impl core::error::Error for Error {}
