//! Ground-truth memory model.
//!
//! Every allocation keeps its full content for its whole lifetime. Bytes that
//! land outside an allocation (only possible when nothing checks the access)
//! are recorded in a per-allocation spill map instead of corrupting anything.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::Error;

/// Byte returned for reads outside any tracked content.
pub const UNINIT: u8 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllocId(u32);

impl AllocId {
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn from_index(index: u32) -> Self {
        AllocId(index)
    }
}

impl fmt::Display for AllocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A tracked address: allocation identity plus byte offset.
///
/// The offset may exceed the allocation size; such a reference exists but is
/// invalid to dereference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ref {
    pub alloc: AllocId,
    pub offset: usize,
}

impl Ref {
    pub const fn base(alloc: AllocId) -> Self {
        Ref { alloc, offset: 0 }
    }

    pub fn checked_add(self, n: usize) -> Result<Ref, Error> {
        let offset = self.offset.checked_add(n).ok_or(Error::OffsetOverflow)?;
        Ok(Ref { offset, ..self })
    }
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.alloc, self.offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Region {
    #[default]
    Heap,
    Stack,
    Global,
}

impl Region {
    pub fn parse(s: &str) -> Option<Region> {
        match s {
            "heap" => Some(Region::Heap),
            "stack" => Some(Region::Stack),
            "global" => Some(Region::Global),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Allocation {
    size: usize,
    live: bool,
    region: Region,
    content: Vec<u8>,
    spill: BTreeMap<usize, u8>,
    tag: String,
}

impl Allocation {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn content(&self) -> &[u8] {
        &self.content
    }

    /// Would-be corruption: out-of-bounds offset to byte written there.
    pub fn spill(&self) -> &BTreeMap<usize, u8> {
        &self.spill
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

#[derive(Clone, Debug, Default)]
pub struct Arena {
    allocs: Vec<Allocation>,
}

/// Why a `free` was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeError {
    DoubleFree,
    InteriorFree,
    Unknown,
}

impl Arena {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a zero-filled allocation and returns its base reference.
    pub fn alloc(&mut self, size: usize, region: Region, tag: &str) -> Result<Ref, Error> {
        if size == 0 {
            return Err(Error::ZeroSizeAlloc);
        }
        let index = u32::try_from(self.allocs.len()).map_err(|_| Error::OffsetOverflow)?;
        self.allocs.push(Allocation {
            size,
            live: true,
            region,
            content: alloc::vec![0; size],
            spill: BTreeMap::new(),
            tag: String::from(tag),
        });
        Ok(Ref::base(AllocId(index)))
    }

    /// Marks the allocation dead. Content is kept for inspection.
    pub fn free(&mut self, r: Ref) -> Result<(), FreeError> {
        let a = self.allocs.get_mut(r.alloc.index()).ok_or(FreeError::Unknown)?;
        if !a.live {
            return Err(FreeError::DoubleFree);
        }
        if r.offset != 0 {
            return Err(FreeError::InteriorFree);
        }
        a.live = false;
        Ok(())
    }

    pub fn get(&self, id: AllocId) -> Option<&Allocation> {
        self.allocs.get(id.index())
    }

    pub fn iter(&self) -> impl Iterator<Item = (AllocId, &Allocation)> {
        self.allocs
            .iter()
            .enumerate()
            .map(|(i, a)| (AllocId(i as u32), a))
    }

    pub fn len(&self) -> usize {
        self.allocs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocs.is_empty()
    }

    /// Bytes from `r` to the end of its live allocation, 0 when invalid.
    pub fn truth_remaining(&self, r: Ref) -> usize {
        match self.get(r.alloc) {
            Some(a) if a.live && r.offset < a.size => a.size - r.offset,
            _ => 0,
        }
    }

    pub fn raw_read_byte(&self, r: Ref) -> Result<u8, Error> {
        let a = self.get(r.alloc).ok_or(Error::UnknownAllocation(r.alloc))?;
        Ok(a.content.get(r.offset).copied().unwrap_or(UNINIT))
    }

    /// Unchecked write. Offsets past the end, and any write into a freed
    /// allocation, go to the spill map.
    pub fn raw_write_byte(&mut self, r: Ref, byte: u8) -> Result<(), Error> {
        let a = self
            .allocs
            .get_mut(r.alloc.index())
            .ok_or(Error::UnknownAllocation(r.alloc))?;
        if a.live && r.offset < a.size {
            a.content[r.offset] = byte;
        } else {
            a.spill.insert(r.offset, byte);
        }
        Ok(())
    }

    pub fn raw_read(&self, r: Ref, n: usize) -> Result<Vec<u8>, Error> {
        r.checked_add(n)?;
        (0..n)
            .map(|i| self.raw_read_byte(Ref { offset: r.offset + i, ..r }))
            .collect()
    }

    pub fn raw_write(&mut self, r: Ref, data: &[u8]) -> Result<(), Error> {
        r.checked_add(data.len())?;
        for (i, &b) in data.iter().enumerate() {
            self.raw_write_byte(Ref { offset: r.offset + i, ..r }, b)?;
        }
        Ok(())
    }

    pub fn spilled_bytes(&self) -> usize {
        self.allocs.iter().map(|a| a.spill.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_returns_zeroed_base_ref() {
        let mut arena = Arena::new();
        let r = arena.alloc(512, Region::Stack, "_text").unwrap();
        assert_eq!(r.offset, 0);
        let a = arena.get(r.alloc).unwrap();
        assert_eq!(a.size(), 512);
        assert!(a.content().iter().all(|&b| b == 0));
        assert_eq!(arena.truth_remaining(r), 512);
    }

    #[test]
    fn minimal_allocation() {
        let mut arena = Arena::new();
        let r = arena.alloc(1, Region::Heap, "b").unwrap();
        assert_eq!(arena.truth_remaining(r), 1);
    }

    #[test]
    fn zero_size_rejected() {
        let mut arena = Arena::new();
        assert_eq!(arena.alloc(0, Region::Heap, "z"), Err(Error::ZeroSizeAlloc));
    }

    #[test]
    fn ids_are_distinct() {
        let mut arena = Arena::new();
        let a = arena.alloc(4, Region::Heap, "a").unwrap();
        let b = arena.alloc(4, Region::Heap, "b").unwrap();
        assert_ne!(a.alloc, b.alloc);
    }

    #[test]
    fn free_rules() {
        let mut arena = Arena::new();
        let r = arena.alloc(10, Region::Heap, "x").unwrap();
        assert_eq!(arena.free(r.checked_add(3).unwrap()), Err(FreeError::InteriorFree));
        arena.raw_write(r, b"keep").unwrap();
        arena.free(r).unwrap();
        assert_eq!(arena.free(r), Err(FreeError::DoubleFree));
        assert_eq!(arena.truth_remaining(r), 0);
        // content survives free
        assert_eq!(&arena.get(r.alloc).unwrap().content()[..4], b"keep");
    }

    #[test]
    fn truth_remaining_edges() {
        let mut arena = Arena::new();
        let r = arena.alloc(10, Region::Heap, "x").unwrap();
        assert_eq!(arena.truth_remaining(r.checked_add(2).unwrap()), 8);
        assert_eq!(arena.truth_remaining(r.checked_add(10).unwrap()), 0);
        assert_eq!(arena.truth_remaining(r.checked_add(9999).unwrap()), 0);
    }

    #[test]
    fn raw_write_in_bounds() {
        let mut arena = Arena::new();
        let r = arena.alloc(8, Region::Heap, "x").unwrap();
        arena.raw_write(r, b"abc").unwrap();
        assert_eq!(&arena.get(r.alloc).unwrap().content()[..3], b"abc");
        assert!(arena.get(r.alloc).unwrap().spill().is_empty());
    }

    #[test]
    fn raw_write_straddling_end_spills() {
        let mut arena = Arena::new();
        let r = arena.alloc(8, Region::Heap, "x").unwrap();
        arena.raw_write(r.checked_add(7).unwrap(), b"yz").unwrap();
        let a = arena.get(r.alloc).unwrap();
        assert_eq!(a.content()[7], b'y');
        assert_eq!(a.spill().len(), 1);
        assert_eq!(a.spill().get(&8), Some(&b'z'));
    }

    #[test]
    fn raw_read_past_end_yields_uninit() {
        let mut arena = Arena::new();
        let r = arena.alloc(8, Region::Heap, "x").unwrap();
        arena.raw_write(r, b"01234567").unwrap();
        // spill is never read back
        arena.raw_write_byte(r.checked_add(8).unwrap(), b'!').unwrap();
        let got = arena.raw_read(r.checked_add(6).unwrap(), 4).unwrap();
        assert_eq!(got, [b'6', b'7', 0, 0]);
    }

    #[test]
    fn offset_overflow_rejected() {
        let mut arena = Arena::new();
        let r = arena.alloc(8, Region::Heap, "x").unwrap();
        let far = Ref { offset: usize::MAX - 1, ..r };
        assert_eq!(far.checked_add(2), Err(Error::OffsetOverflow));
        assert_eq!(arena.raw_write(far, b"abc"), Err(Error::OffsetOverflow));
    }
}
