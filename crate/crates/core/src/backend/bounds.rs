use alloc::vec::Vec;

use super::{slot, AccessKind, AccessVerdict, Backend, MetaCounters, Metadata, SizeEstimate};
use crate::arena::{AllocId, Ref};
use crate::Error;

/// Base/bound pair for one allocation. Offsets are relative to the allocation
/// start, so `base_offset` is always 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundsRecord {
    pub base_offset: usize,
    pub bound: usize,
    pub live: bool,
}

/// Explicit bounds table indexed by allocation id.
#[derive(Clone, Debug, Default)]
pub struct BoundsTable {
    records: Vec<Option<BoundsRecord>>,
    lookups: u64,
}

impl BoundsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, id: AllocId) -> Option<&BoundsRecord> {
        self.records.get(id.index()).and_then(Option::as_ref)
    }
}

impl Metadata for BoundsTable {
    fn backend(&self) -> Backend {
        Backend::BoundsTable
    }

    fn install(&mut self, id: AllocId, size: usize) -> Result<(), Error> {
        let s = slot(&mut self.records, id);
        if s.is_some() {
            return Err(Error::AlreadyInstalled(id));
        }
        *s = Some(BoundsRecord {
            base_offset: 0,
            bound: size,
            live: true,
        });
        Ok(())
    }

    fn retire(&mut self, id: AllocId) -> Result<(), Error> {
        match self.records.get_mut(id.index()).and_then(Option::as_mut) {
            Some(rec) if rec.live => {
                rec.live = false;
                Ok(())
            }
            _ => Err(Error::NotInstalled(id)),
        }
    }

    fn size_right(&mut self, r: Ref) -> SizeEstimate {
        self.lookups += 1;
        let Some(rec) = self.record(r.alloc) else {
            return SizeEstimate::Invalid;
        };
        // bound - pointer, with the pointer expressed relative to base
        match r.offset.checked_sub(rec.base_offset) {
            Some(off) if rec.live && off < rec.bound => SizeEstimate::Exact(rec.bound - off),
            _ => SizeEstimate::Invalid,
        }
    }

    fn check_access(&self, r: Ref, n: usize, _kind: AccessKind) -> AccessVerdict {
        let Some(rec) = self.record(r.alloc) else {
            return AccessVerdict::OutOfBounds;
        };
        if !rec.live {
            return AccessVerdict::UseAfterFree;
        }
        match r.offset.checked_add(n) {
            Some(end) if end <= rec.bound => AccessVerdict::Allowed,
            _ => AccessVerdict::OutOfBounds,
        }
    }

    fn counters(&self) -> MetaCounters {
        MetaCounters {
            shadow_reads: 0,
            metadata_lookups: self.lookups,
        }
    }
}
