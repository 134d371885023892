//! Introspection interceptors.
//!
//! Each wrapper asks `size_right` how much room the destination has and hands
//! the reference implementation a request that fits. Correct calls behave
//! exactly like the reference; oversized ones are cut down and logged.
//! An `Unknown` estimate (no metadata) leaves every call unchanged.

use super::reference::{self, read_line};
use super::{LibcCall, Ret};
use crate::arena::Ref;
use crate::backend::Metadata;
use crate::policy::{Exec, Machine};

pub(crate) fn dispatch<B: Metadata>(m: &mut Machine<B>, call: &LibcCall) -> Exec<Ret> {
    Ok(match *call {
        LibcCall::Strlen { s } => Ret::Size(cs_strlen(m, s)?),
        LibcCall::Strnlen { s, n } => Ret::Size(cs_strnlen(m, s, n)?),
        LibcCall::Strcpy { dest, src } => Ret::Ptr(cs_strcpy(m, dest, src)?),
        LibcCall::Strncpy { dest, src, n } => Ret::Ptr(cs_strncpy(m, dest, src, n)?),
        LibcCall::Strcat { dest, src } => Ret::Ptr(cs_strcat(m, dest, src)?),
        LibcCall::Memcpy { dest, src, n } => Ret::Ptr(cs_memcpy(m, dest, src, n)?),
        LibcCall::Memset { dest, c, n } => Ret::Ptr(cs_memset(m, dest, c, n)?),
        LibcCall::Gets { s } => cs_gets(m, s)?.into(),
        LibcCall::Fgets { s, n } => cs_fgets(m, s, n)?.into(),
    })
}

/// `strnlen(s, size_right(s))`: the buffer size is the longest possible string.
pub fn cs_strlen<B: Metadata>(m: &mut Machine<B>, s: Ref) -> Exec<usize> {
    let room = m.size_right(s).value();
    reference::ref_strnlen(m, s, room)
}

pub fn cs_strnlen<B: Metadata>(m: &mut Machine<B>, s: Ref, n: usize) -> Exec<usize> {
    let room = m.size_right(s).value();
    reference::ref_strnlen(m, s, n.min(room))
}

/// Clamps the destination only; an oversized source still overreads.
pub fn cs_memcpy<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref, n: usize) -> Exec<Ref> {
    let len = n.min(m.size_right(dest).value());
    m.note_clamp(dest, n, len);
    reference::ref_memcpy(m, dest, src, len)
}

pub fn cs_memset<B: Metadata>(m: &mut Machine<B>, dest: Ref, c: u8, n: usize) -> Exec<Ref> {
    let len = n.min(m.size_right(dest).value());
    m.note_clamp(dest, n, len);
    reference::ref_memset(m, dest, c, len)
}

pub fn cs_strncpy<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref, n: usize) -> Exec<Ref> {
    let len = n.min(m.size_right(dest).value());
    m.note_clamp(dest, n, len);
    reference::ref_strncpy(m, dest, src, len)
}

/// Appends as much of `src` as fits and always leaves room for the NUL.
pub fn cs_strcat<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref) -> Exec<Ref> {
    let est = m.size_right(dest).value();
    let used = reference::ref_strnlen(m, dest, est)?;
    let room = est - used;
    let wanted = cs_strlen(m, src)?;
    if room == 0 {
        m.note_truncation(dest, wanted, 0, "concatenation dropped");
        return Ok(dest);
    }
    let tail = dest.checked_add(used)?;
    let copy = wanted.min(room - 1);
    for i in 0..copy {
        let b = m.load(src.checked_add(i)?)?;
        m.store(tail.checked_add(i)?, b)?;
    }
    m.store(tail.checked_add(copy)?, 0)?;
    if copy < wanted {
        m.note_truncation(dest, wanted, copy, "concatenation truncated");
    }
    Ok(dest)
}

/// Copies the string plus terminator if it fits, otherwise a prefix whose
/// last byte is forced to NUL.
pub fn cs_strcpy<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref) -> Exec<Ref> {
    let est = m.size_right(dest).value();
    let len = cs_strlen(m, src)?;
    let total = len.saturating_add(1).min(est);
    if total == 0 {
        m.note_truncation(dest, len, 0, "copy dropped");
        return Ok(dest);
    }
    let copy = total - 1;
    for i in 0..copy {
        let b = m.load(src.checked_add(i)?)?;
        m.store(dest.checked_add(i)?, b)?;
    }
    m.store(dest.checked_add(copy)?, 0)?;
    if copy < len {
        m.note_truncation(dest, len, copy, "copy truncated");
    }
    Ok(dest)
}

/// `gets` bounded by `size_right(s)`: reads at most `size - 1` bytes of the
/// line. The newline is consumed but not stored, as with `gets`, so calls that
/// fit are indistinguishable from the unbounded function. A line that
/// doesn't fit leaves its tail in the stream.
pub fn cs_gets<B: Metadata>(m: &mut Machine<B>, s: Ref) -> Exec<Option<Ref>> {
    let n = m.size_right(s).value();
    if n == 0 {
        return Ok(None);
    }
    let Some(line) = read_line(m, s, n - 1, false)? else {
        return Ok(None);
    };
    if line.hit_limit {
        match m.stdin().peek() {
            Some(b'\n') => {
                m.stdin_mut().next_byte();
            }
            Some(_) => {
                let rest = m.stdin().pending_line_len();
                m.note_truncation(s, line.stored + rest, line.stored, "line truncated");
            }
            None => {}
        }
    }
    m.store(s.checked_add(line.stored)?, 0)?;
    Ok(Some(s))
}

pub fn cs_fgets<B: Metadata>(m: &mut Machine<B>, s: Ref, n: usize) -> Exec<Option<Ref>> {
    let len = n.min(m.size_right(s).value());
    if len == 0 {
        if n > 0 && m.stdin().peek().is_some() {
            m.note_clamp(s, n, 0);
        }
        return Ok(None);
    }
    // fgets(s, 1) succeeds even at end-of-file; a larger n would not have
    if len == 1 && n > 1 && m.stdin().peek().is_none() {
        return Ok(None);
    }
    let (out, line) = reference::fgets_line(m, s, len)?;
    let stored = line.map_or(0, |l| l.stored);
    let limited = line.map_or(len == 1, |l| l.hit_limit);
    // the clamp only matters if the smaller limit cut a line that had more to give
    if len < n && out.is_some() && limited && m.stdin().peek().is_some() {
        let rest = m.stdin().pending_line_len().max(1);
        m.note_truncation(s, stored + rest, stored, "line truncated");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::Region;
    use crate::backend::{AnyBackend, Backend};
    use crate::policy::{EventKind, Machine, Policy, Stop};

    fn machine(backend: Backend, policy: Policy) -> Machine {
        Machine::new(AnyBackend::with_default_redzone(backend), policy)
    }

    fn buf(m: &mut Machine, size: usize, init: &[u8]) -> Ref {
        let r = m.alloc(size, Region::Heap, "buf").unwrap();
        m.arena_mut().raw_write(r, init).unwrap();
        r
    }

    fn content(m: &Machine, r: Ref) -> &[u8] {
        m.arena().get(r.alloc).unwrap().content()
    }

    const CHECKED: [Backend; 2] = [Backend::BoundsTable, Backend::ShadowRedzone];

    #[test]
    fn strlen_terminated_any_backend() {
        for b in Backend::ALL {
            let mut m = machine(b, Policy::ContextAware);
            let s = buf(&mut m, 8, b"abc\0");
            assert_eq!(cs_strlen(&mut m, s), Ok(3));
        }
    }

    #[test]
    fn strlen_unterminated_stops_at_size() {
        for b in CHECKED {
            let mut m = machine(b, Policy::ContextAware);
            let s = buf(&mut m, 8, b"abcdefgh");
            assert_eq!(cs_strlen(&mut m, s), Ok(8));
            assert!(m.events().is_empty());
        }
    }

    /// Checks bounds but has no introspection: every estimate is Unknown.
    struct Opaque(crate::backend::BoundsTable);

    impl Metadata for Opaque {
        fn backend(&self) -> Backend {
            Backend::Null
        }
        fn install(&mut self, id: crate::arena::AllocId, size: usize) -> Result<(), crate::Error> {
            self.0.install(id, size)
        }
        fn retire(&mut self, id: crate::arena::AllocId) -> Result<(), crate::Error> {
            self.0.retire(id)
        }
        fn size_right(&mut self, _r: Ref) -> crate::backend::SizeEstimate {
            crate::backend::SizeEstimate::Unknown
        }
        fn check_access(
            &self,
            r: Ref,
            n: usize,
            kind: crate::backend::AccessKind,
        ) -> crate::backend::AccessVerdict {
            self.0.check_access(r, n, kind)
        }
        fn counters(&self) -> crate::backend::MetaCounters {
            self.0.counters()
        }
    }

    #[test]
    fn strlen_unknown_estimate_disables_interceptor() {
        let mut m = Machine::new(Opaque(crate::backend::BoundsTable::new()), Policy::Abort);
        let s = m.alloc(8, Region::Heap, "s").unwrap();
        m.arena_mut().raw_write(s, b"abcdefgh").unwrap();
        let Err(Stop::Abort(cause)) = cs_strlen(&mut m, s) else { panic!() };
        assert_eq!((cause.kind, cause.detail.offset), (EventKind::OobRead, Some(8)));

        // the null backend detects nothing: the overread runs into UNINIT zero
        let mut m = machine(Backend::Null, Policy::Abort);
        let s = buf(&mut m, 8, b"abcdefgh");
        assert_eq!(cs_strlen(&mut m, s), Ok(8));
        assert!(m.events().is_empty());
    }

    #[test]
    fn strlen_of_freed_is_zero() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let s = buf(&mut m, 8, b"abc\0");
        m.free(s).unwrap();
        assert_eq!(cs_strlen(&mut m, s), Ok(0));
    }

    #[test]
    fn gets_bounded_by_buffer() {
        for b in CHECKED {
            let mut m = machine(b, Policy::ContextAware);
            m.stdin_mut().feed(b"0123456789\n");
            let s = buf(&mut m, 8, b"");
            assert_eq!(cs_gets(&mut m, s), Ok(Some(s)));
            assert_eq!(content(&m, s), b"0123456\0");
            assert_eq!(m.stdin().position(), 7);
            assert_eq!(m.events()[0].kind, EventKind::Truncation);
        }
    }

    #[test]
    fn gets_short_line_matches_gets() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        m.stdin_mut().feed(b"hi\n");
        let s = buf(&mut m, 8, b"zzzzzzzz");
        cs_gets(&mut m, s).unwrap();
        assert_eq!(content(&m, s), b"hi\0zzzzz");
        assert_eq!(m.stdin().position(), 3);
    }

    #[test]
    fn gets_exact_fit_consumes_newline() {
        let mut m = machine(Backend::ShadowRedzone, Policy::ContextAware);
        m.stdin_mut().feed(b"abc\nX");
        let s = buf(&mut m, 4, b"");
        cs_gets(&mut m, s).unwrap();
        assert_eq!(content(&m, s), b"abc\0");
        assert_eq!(m.stdin().position(), 4);
        assert!(m.events().is_empty());
    }

    #[test]
    fn gets_unknown_reads_whole_line() {
        let mut m = machine(Backend::Null, Policy::ContextAware);
        m.stdin_mut().feed(b"0123456789\n");
        let s = buf(&mut m, 8, b"");
        cs_gets(&mut m, s).unwrap();
        let a = m.arena().get(s.alloc).unwrap();
        assert_eq!(a.content(), b"01234567");
        assert_eq!(a.spill().len(), 3);
    }

    #[test]
    fn gets_invalid_reads_nothing() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        m.stdin_mut().feed(b"abc\n");
        let s = buf(&mut m, 8, b"");
        m.free(s).unwrap();
        assert_eq!(cs_gets(&mut m, s), Ok(None));
        assert_eq!(m.stdin().position(), 0);
    }

    #[test]
    fn memcpy_clamps_dest() {
        for b in CHECKED {
            let mut m = machine(b, Policy::ContextAware);
            let d = buf(&mut m, 4, b"");
            let s = buf(&mut m, 16, b"0123456789abcdef");
            cs_memcpy(&mut m, d, s, 10).unwrap();
            assert_eq!(content(&m, d), b"0123");
            let ev = &m.events()[0];
            assert_eq!(ev.kind, EventKind::Clamp);
            assert_eq!((ev.detail.requested, ev.detail.len), (Some(10), 4));
            assert_eq!(m.counters().bytes_clamped, 6);
        }
    }

    #[test]
    fn memcpy_fitting_is_untouched() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let d = buf(&mut m, 16, b"");
        let s = buf(&mut m, 16, b"0123456789abcdef");
        cs_memcpy(&mut m, d, s, 10).unwrap();
        assert_eq!(content(&m, d), b"0123456789\0\0\0\0\0\0");
        assert!(m.events().is_empty());
    }

    #[test]
    fn memcpy_invalid_dest_copies_nothing() {
        let mut m = machine(Backend::ShadowRedzone, Policy::ContextAware);
        let d = buf(&mut m, 4, b"");
        let s = buf(&mut m, 4, b"abcd");
        m.free(d).unwrap();
        cs_memcpy(&mut m, d, s, 4).unwrap();
        assert_eq!(m.counters().checked_accesses, 0);
    }

    #[test]
    fn memcpy_source_overread_still_detected() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let d = buf(&mut m, 16, b"");
        let s = buf(&mut m, 4, b"abcd");
        let Err(Stop::Abort(cause)) = cs_memcpy(&mut m, d, s, 10) else { panic!() };
        assert_eq!(cause.kind, EventKind::OobRead);
    }

    #[test]
    fn memset_wrapped_length() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let hdr = buf(&mut m, 140, &[0xAA; 140]);
        let at = hdr.checked_add(40).unwrap();
        cs_memset(&mut m, at, 0, usize::MAX - 3).unwrap();
        let c = content(&m, hdr);
        assert!(c[..40].iter().all(|&b| b == 0xAA));
        assert!(c[40..].iter().all(|&b| b == 0));
        assert_eq!(m.counters().checked_accesses, 100);
    }

    #[test]
    fn memset_trivia() {
        let mut m = machine(Backend::ShadowRedzone, Policy::ContextAware);
        let d = buf(&mut m, 8, b"abcdefgh");
        cs_memset(&mut m, d, b'x', 0).unwrap();
        assert_eq!(content(&m, d), b"abcdefgh");
        cs_memset(&mut m, d, b'x', 8).unwrap();
        assert_eq!(content(&m, d), b"xxxxxxxx");
        assert!(m.events().is_empty());
    }

    #[test]
    fn strcat_truncates_with_terminator() {
        for b in CHECKED {
            let mut m = machine(b, Policy::ContextAware);
            let d = buf(&mut m, 8, b"ab\0");
            let s = buf(&mut m, 8, b"cdefgh\0");
            cs_strcat(&mut m, d, s).unwrap();
            assert_eq!(content(&m, d), b"abcdefg\0");
            assert_eq!(m.events()[0].kind, EventKind::Truncation);
        }
    }

    #[test]
    fn strcat_fitting() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let d = buf(&mut m, 8, b"ab\0");
        let s = buf(&mut m, 4, b"cd\0");
        cs_strcat(&mut m, d, s).unwrap();
        assert_eq!(&content(&m, d)[..5], b"abcd\0");
        assert!(m.events().is_empty());
    }

    #[test]
    fn strcat_full_dest_drops() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let d = buf(&mut m, 4, b"abcd");
        let s = buf(&mut m, 4, b"x\0");
        cs_strcat(&mut m, d, s).unwrap();
        assert_eq!(content(&m, d), b"abcd");
        assert_eq!(m.events()[0].detail.note.as_deref(), Some("concatenation dropped"));
    }

    #[test]
    fn strcat_repeated_into_fixed_log_buffer() {
        let mut m = machine(Backend::ShadowRedzone, Policy::ContextAware);
        let text = buf(&mut m, 512, b"");
        let a = buf(&mut m, 401, &[b'A'; 400]);
        let b = buf(&mut m, 301, &[b'B'; 300]);
        let crlf = buf(&mut m, 3, b"\r\n\0");
        for src in [a, b, crlf] {
            cs_strcat(&mut m, text, src).unwrap();
            let c = content(&m, text);
            assert!(c.contains(&0));
        }
        assert_eq!(cs_strlen(&mut m, text), Ok(511));
        assert!(m.arena().get(text.alloc).unwrap().spill().is_empty());
    }

    #[test]
    fn strncpy_clamped_without_nul() {
        for b in CHECKED {
            let mut m = machine(b, Policy::ContextAware);
            let d = buf(&mut m, 8, b"");
            let s = buf(&mut m, 21, b"01234567890123456789");
            cs_strncpy(&mut m, d, s, 20).unwrap();
            assert_eq!(content(&m, d), b"01234567");
            cs_strncpy(&mut m, d, s, 0).unwrap();
            assert_eq!(m.events().len(), 1);
        }
    }

    #[test]
    fn strcpy_forces_nul() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        let d = buf(&mut m, 4, b"");
        let s = buf(&mut m, 8, b"abcdef\0");
        cs_strcpy(&mut m, d, s).unwrap();
        assert_eq!(content(&m, d), b"abc\0");
        let e = buf(&mut m, 1, b"");
        cs_strcpy(&mut m, d, e).unwrap();
        assert_eq!(content(&m, d), b"\0bc\0");
    }

    #[test]
    fn strcpy_invalid_is_noop() {
        let mut m = machine(Backend::ShadowRedzone, Policy::ContextAware);
        let d = buf(&mut m, 4, b"zzzz");
        let s = buf(&mut m, 8, b"abc\0");
        m.free(d).unwrap();
        cs_strcpy(&mut m, d, s).unwrap();
        assert_eq!(content(&m, d), b"zzzz");
    }

    #[test]
    fn fgets_clamped() {
        let mut m = machine(Backend::BoundsTable, Policy::ContextAware);
        m.stdin_mut().feed(b"0123456789\n");
        let s = buf(&mut m, 4, b"");
        cs_fgets(&mut m, s, 64).unwrap();
        assert_eq!(content(&m, s), b"012\0");
        assert_eq!(m.events()[0].kind, EventKind::Truncation);
    }

    #[test]
    fn one_byte_buffer_at_eof_returns_null() {
        for b in CHECKED {
            let mut m = machine(b, Policy::ContextAware);
            let s = buf(&mut m, 1, b"z");
            assert_eq!(cs_gets(&mut m, s), Ok(None));
            assert_eq!(cs_fgets(&mut m, s, 8), Ok(None));
            assert_eq!(content(&m, s), b"z");
            // an empty line still fits
            m.stdin_mut().feed(b"\n");
            assert_eq!(cs_gets(&mut m, s), Ok(Some(s)));
            assert_eq!(content(&m, s), b"\0");
            assert_eq!(m.stdin().position(), 1);
        }
    }
}
