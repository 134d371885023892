use super::{AccessKind, AccessVerdict, Backend, MetaCounters, Metadata, SizeEstimate};
use crate::arena::{AllocId, Ref};
use crate::Error;

/// No metadata at all: nothing is detected and interceptors see `Unknown`.
#[derive(Clone, Debug, Default)]
pub struct NullBackend {
    lookups: u64,
}

impl NullBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Metadata for NullBackend {
    fn backend(&self) -> Backend {
        Backend::Null
    }

    fn install(&mut self, _id: AllocId, _size: usize) -> Result<(), Error> {
        Ok(())
    }

    fn retire(&mut self, _id: AllocId) -> Result<(), Error> {
        Ok(())
    }

    fn size_right(&mut self, _r: Ref) -> SizeEstimate {
        self.lookups += 1;
        SizeEstimate::Unknown
    }

    fn check_access(&self, _r: Ref, _n: usize, _kind: AccessKind) -> AccessVerdict {
        AccessVerdict::Allowed
    }

    fn counters(&self) -> MetaCounters {
        MetaCounters {
            shadow_reads: 0,
            metadata_lookups: self.lookups,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_unknown_and_allowed() {
        let id = AllocId::from_index(0);
        let mut n = NullBackend::new();
        n.install(id, 4).unwrap();
        let r = Ref { alloc: id, offset: 2 };
        assert_eq!(n.size_right(r), SizeEstimate::Unknown);
        assert_eq!(n.size_right(r).value(), usize::MAX);
        assert_eq!(n.check_access(r, 100, AccessKind::Write), AccessVerdict::Allowed);
        assert_eq!(n.counters().metadata_lookups, 2);
    }
}
