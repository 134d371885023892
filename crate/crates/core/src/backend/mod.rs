//! Metadata backends that answer `size_right` and check accesses.
//!
//! * [`BoundsTable`]: explicit per-allocation base/bound records, constant
//!   time (SoftBound/MPX-style).
//! * [`ShadowRedzone`]: one shadow cell per byte with redzones on both sides;
//!   `size_right` walks the shadow until it hits a redzone (ASan-style).
//! * [`NullBackend`]: no metadata. Every query answers [`SizeEstimate::Unknown`]
//!   and every access is allowed.

use core::fmt;
use core::str::FromStr;

use crate::arena::{AllocId, Ref};
use crate::Error;

mod bounds;
mod null;
mod shadow;

pub use bounds::{BoundsRecord, BoundsTable};
pub use null::NullBackend;
pub use shadow::{ShadowCell, ShadowMap, ShadowRedzone, DEFAULT_REDZONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Backend {
    #[cfg_attr(feature = "serde", serde(rename = "bounds"))]
    BoundsTable,
    #[cfg_attr(feature = "serde", serde(rename = "shadow"))]
    ShadowRedzone,
    #[cfg_attr(feature = "serde", serde(rename = "none"))]
    Null,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::BoundsTable, Backend::ShadowRedzone, Backend::Null];

    /// Flag spelling.
    pub fn name(self) -> &'static str {
        match self {
            Backend::BoundsTable => "bounds",
            Backend::ShadowRedzone => "shadow",
            Backend::Null => "none",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Backend::BoundsTable => "bounds (SoftBound/MPX-style)",
            Backend::ShadowRedzone => "shadow (ASan-style redzones)",
            Backend::Null => "none (introspection disabled)",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bounds" => Ok(Backend::BoundsTable),
            "shadow" => Ok(Backend::ShadowRedzone),
            "none" => Ok(Backend::Null),
            _ => Err(UnknownName),
        }
    }
}

/// Returned by `FromStr` impls for the small name enums in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnknownName;

impl fmt::Display for UnknownName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unrecognized name")
    }
}

/// Answer of a `size_right` query.
///
/// Whenever the kind is not `Invalid`, [`value`](Self::value) is at least the
/// true number of bytes remaining.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SizeEstimate {
    Exact(usize),
    /// Upper bound, e.g. from a backend that rounds allocation sizes up.
    Conservative(usize),
    Invalid,
    /// No metadata; the value is the largest representable count.
    Unknown,
}

impl SizeEstimate {
    pub const UNKNOWN_VALUE: usize = usize::MAX;

    pub fn value(self) -> usize {
        match self {
            SizeEstimate::Exact(n) | SizeEstimate::Conservative(n) => n,
            SizeEstimate::Invalid => 0,
            SizeEstimate::Unknown => Self::UNKNOWN_VALUE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AccessVerdict {
    Allowed,
    OutOfBounds,
    UseAfterFree,
}

/// Operation counters kept by a backend.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetaCounters {
    pub shadow_reads: u64,
    pub metadata_lookups: u64,
}

/// A metadata representation the policy engine can consult.
pub trait Metadata {
    fn backend(&self) -> Backend;

    fn install(&mut self, id: AllocId, size: usize) -> Result<(), Error>;

    fn retire(&mut self, id: AllocId) -> Result<(), Error>;

    /// Bytes to the right of `r` inside its allocation. Never fails; invalid
    /// references answer [`SizeEstimate::Invalid`].
    fn size_right(&mut self, r: Ref) -> SizeEstimate;

    fn check_access(&self, r: Ref, n: usize, kind: AccessKind) -> AccessVerdict;

    fn counters(&self) -> MetaCounters;

    /// Redzone width for shadow backends, 0 otherwise.
    fn redzone(&self) -> usize {
        0
    }
}

/// Enum dispatch over the bundled backends.
#[derive(Clone, Debug)]
pub enum AnyBackend {
    Bounds(BoundsTable),
    Shadow(ShadowRedzone),
    Null(NullBackend),
}

impl AnyBackend {
    pub fn new(backend: Backend, redzone: usize) -> Result<Self, Error> {
        Ok(match backend {
            Backend::BoundsTable => AnyBackend::Bounds(BoundsTable::new()),
            Backend::ShadowRedzone => AnyBackend::Shadow(ShadowRedzone::new(redzone)?),
            Backend::Null => AnyBackend::Null(NullBackend::new()),
        })
    }

    pub fn with_default_redzone(backend: Backend) -> Self {
        Self::new(backend, DEFAULT_REDZONE).expect("default redzone is valid")
    }

    fn inner(&self) -> &dyn Metadata {
        match self {
            AnyBackend::Bounds(b) => b,
            AnyBackend::Shadow(b) => b,
            AnyBackend::Null(b) => b,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Metadata {
        match self {
            AnyBackend::Bounds(b) => b,
            AnyBackend::Shadow(b) => b,
            AnyBackend::Null(b) => b,
        }
    }
}

impl Metadata for AnyBackend {
    fn backend(&self) -> Backend {
        self.inner().backend()
    }

    fn install(&mut self, id: AllocId, size: usize) -> Result<(), Error> {
        self.inner_mut().install(id, size)
    }

    fn retire(&mut self, id: AllocId) -> Result<(), Error> {
        self.inner_mut().retire(id)
    }

    fn size_right(&mut self, r: Ref) -> SizeEstimate {
        self.inner_mut().size_right(r)
    }

    fn check_access(&self, r: Ref, n: usize, kind: AccessKind) -> AccessVerdict {
        self.inner().check_access(r, n, kind)
    }

    fn counters(&self) -> MetaCounters {
        self.inner().counters()
    }

    fn redzone(&self) -> usize {
        self.inner().redzone()
    }
}

/// Grows `slots` so that `id` is addressable and returns the slot.
pub(crate) fn slot<T>(slots: &mut alloc::vec::Vec<Option<T>>, id: AllocId) -> &mut Option<T> {
    if slots.len() <= id.index() {
        slots.resize_with(id.index() + 1, || None);
    }
    &mut slots[id.index()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in Backend::ALL {
            assert_eq!(b.name().parse::<Backend>(), Ok(b));
        }
        assert!("mpx".parse::<Backend>().is_err());
    }

    #[test]
    fn estimate_values() {
        assert_eq!(SizeEstimate::Exact(8).value(), 8);
        assert_eq!(SizeEstimate::Conservative(16).value(), 16);
        assert_eq!(SizeEstimate::Invalid.value(), 0);
        assert_eq!(SizeEstimate::Unknown.value(), usize::MAX);
    }
}
