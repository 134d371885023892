use alloc::vec::Vec;

use super::{slot, AccessKind, AccessVerdict, Backend, MetaCounters, Metadata, SizeEstimate};
use crate::arena::{AllocId, Ref};
use crate::Error;

pub const DEFAULT_REDZONE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ShadowCell {
    Addressable,
    Redzone,
    Freed,
}

/// Shadow for one allocation: `[redzone | body | redzone]`, one cell per byte.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShadowMap {
    cells: Vec<ShadowCell>,
}

impl ShadowMap {
    fn new(size: usize, redzone: usize) -> Self {
        let mut cells = Vec::with_capacity(size + 2 * redzone);
        cells.resize(redzone, ShadowCell::Redzone);
        cells.resize(redzone + size, ShadowCell::Addressable);
        cells.resize(size + 2 * redzone, ShadowCell::Redzone);
        ShadowMap { cells }
    }

    pub fn cells(&self) -> &[ShadowCell] {
        &self.cells
    }
}

#[derive(Clone, Debug)]
pub struct ShadowRedzone {
    redzone: usize,
    maps: Vec<Option<ShadowMap>>,
    reads: u64,
}

impl ShadowRedzone {
    pub fn new(redzone: usize) -> Result<Self, Error> {
        if redzone == 0 {
            return Err(Error::RedzoneTooSmall);
        }
        Ok(ShadowRedzone {
            redzone,
            maps: Vec::new(),
            reads: 0,
        })
    }

    pub fn map(&self, id: AllocId) -> Option<&ShadowMap> {
        self.maps.get(id.index()).and_then(Option::as_ref)
    }

    fn cell_index(&self, r: Ref) -> Option<usize> {
        self.redzone.checked_add(r.offset)
    }

    fn is_retired(&self, map: &ShadowMap) -> bool {
        // every allocation has at least one body cell right after the left redzone
        map.cells[self.redzone] == ShadowCell::Freed
    }
}

impl Default for ShadowRedzone {
    fn default() -> Self {
        Self::new(DEFAULT_REDZONE).expect("nonzero")
    }
}

impl Metadata for ShadowRedzone {
    fn backend(&self) -> Backend {
        Backend::ShadowRedzone
    }

    fn install(&mut self, id: AllocId, size: usize) -> Result<(), Error> {
        let redzone = self.redzone;
        let s = slot(&mut self.maps, id);
        if s.is_some() {
            return Err(Error::AlreadyInstalled(id));
        }
        *s = Some(ShadowMap::new(size, redzone));
        Ok(())
    }

    fn retire(&mut self, id: AllocId) -> Result<(), Error> {
        let redzone = self.redzone;
        let map = self
            .maps
            .get_mut(id.index())
            .and_then(Option::as_mut)
            .ok_or(Error::NotInstalled(id))?;
        if map.cells[redzone] == ShadowCell::Freed {
            return Err(Error::NotInstalled(id));
        }
        let end = map.cells.len() - redzone;
        map.cells[redzone..end].fill(ShadowCell::Freed);
        Ok(())
    }

    /// Linear walk: counts addressable cells from the reference's cell up to
    /// the first non-addressable one. Every cell inspected is one shadow read.
    fn size_right(&mut self, r: Ref) -> SizeEstimate {
        let start = self.cell_index(r);
        let Some(map) = self.maps.get(r.alloc.index()).and_then(Option::as_ref) else {
            self.reads += 1;
            return SizeEstimate::Invalid;
        };
        let Some(start) = start else {
            self.reads += 1;
            return SizeEstimate::Invalid;
        };
        let mut count = 0usize;
        loop {
            self.reads += 1;
            match map.cells.get(start + count) {
                Some(ShadowCell::Addressable) => count += 1,
                _ => break,
            }
        }
        if count == 0 {
            SizeEstimate::Invalid
        } else {
            SizeEstimate::Exact(count)
        }
    }

    fn check_access(&self, r: Ref, n: usize, _kind: AccessKind) -> AccessVerdict {
        let Some(map) = self.map(r.alloc) else {
            return AccessVerdict::OutOfBounds;
        };
        if self.is_retired(map) {
            return AccessVerdict::UseAfterFree;
        }
        let range = self
            .cell_index(r)
            .and_then(|start| Some(start..start.checked_add(n)?));
        match range.and_then(|range| map.cells.get(range)) {
            Some(cells) if cells.iter().all(|&c| c == ShadowCell::Addressable) => {
                AccessVerdict::Allowed
            }
            _ => AccessVerdict::OutOfBounds,
        }
    }

    fn counters(&self) -> MetaCounters {
        MetaCounters {
            shadow_reads: self.reads,
            metadata_lookups: 0,
        }
    }

    fn redzone(&self) -> usize {
        self.redzone
    }
}
