//! ISO C semantics, one checked byte at a time.

use super::{LibcCall, Ret};
use crate::arena::Ref;
use crate::backend::Metadata;
use crate::policy::{Exec, Machine};
use crate::Error;

pub(crate) fn dispatch<B: Metadata>(m: &mut Machine<B>, call: &LibcCall) -> Exec<Ret> {
    Ok(match *call {
        LibcCall::Strlen { s } => Ret::Size(ref_strlen(m, s)?),
        LibcCall::Strnlen { s, n } => Ret::Size(ref_strnlen(m, s, n)?),
        LibcCall::Strcpy { dest, src } => Ret::Ptr(ref_strcpy(m, dest, src)?),
        LibcCall::Strncpy { dest, src, n } => Ret::Ptr(ref_strncpy(m, dest, src, n)?),
        LibcCall::Strcat { dest, src } => Ret::Ptr(ref_strcat(m, dest, src)?),
        LibcCall::Memcpy { dest, src, n } => Ret::Ptr(ref_memcpy(m, dest, src, n)?),
        LibcCall::Memset { dest, c, n } => Ret::Ptr(ref_memset(m, dest, c, n)?),
        LibcCall::Gets { s } => ref_gets(m, s)?.into(),
        LibcCall::Fgets { s, n } => ref_fgets(m, s, n)?.into(),
    })
}

pub fn ref_strlen<B: Metadata>(m: &mut Machine<B>, s: Ref) -> Exec<usize> {
    ref_strnlen(m, s, usize::MAX)
}

pub fn ref_strnlen<B: Metadata>(m: &mut Machine<B>, s: Ref, n: usize) -> Exec<usize> {
    for i in 0..n {
        if m.load(s.checked_add(i)?)? == 0 {
            return Ok(i);
        }
    }
    Ok(n)
}

pub fn ref_strcpy<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref) -> Exec<Ref> {
    let mut i = 0;
    loop {
        let b = m.load(src.checked_add(i)?)?;
        m.store(dest.checked_add(i)?, b)?;
        if b == 0 {
            return Ok(dest);
        }
        i += 1;
    }
}

/// Copies at most `n` bytes; if `src` is shorter, pads with NUL up to `n`.
pub fn ref_strncpy<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref, n: usize) -> Exec<Ref> {
    let mut i = 0;
    while i < n {
        let b = m.load(src.checked_add(i)?)?;
        m.store(dest.checked_add(i)?, b)?;
        i += 1;
        if b == 0 {
            break;
        }
    }
    while i < n {
        m.store(dest.checked_add(i)?, 0)?;
        i += 1;
    }
    Ok(dest)
}

pub fn ref_strcat<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref) -> Exec<Ref> {
    let d = ref_strlen(m, dest)?;
    ref_strcpy(m, dest.checked_add(d)?, src)?;
    Ok(dest)
}

fn overlaps(a: Ref, b: Ref, n: usize) -> bool {
    n > 0
        && a.alloc == b.alloc
        && a.offset < b.offset.saturating_add(n)
        && b.offset < a.offset.saturating_add(n)
}

/// Overlapping ranges are a scenario-authoring error, not undefined behavior.
pub fn ref_memcpy<B: Metadata>(m: &mut Machine<B>, dest: Ref, src: Ref, n: usize) -> Exec<Ref> {
    if overlaps(dest, src, n) {
        return Err(Error::OverlappingCopy.into());
    }
    for i in 0..n {
        let b = m.load(src.checked_add(i)?)?;
        m.store(dest.checked_add(i)?, b)?;
    }
    Ok(dest)
}

pub fn ref_memset<B: Metadata>(m: &mut Machine<B>, dest: Ref, c: u8, n: usize) -> Exec<Ref> {
    for i in 0..n {
        m.store(dest.checked_add(i)?, c)?;
    }
    Ok(dest)
}

/// How a line read ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LineRead {
    pub stored: usize,
    pub hit_limit: bool,
}

/// Shared reader for `fgets`/`gets`. Stores at most `limit` bytes of the next
/// line, keeping or dropping the newline. Returns `None` when end-of-file is
/// reached before anything is consumed.
pub(crate) fn read_line<B: Metadata>(
    m: &mut Machine<B>,
    s: Ref,
    limit: usize,
    keep_newline: bool,
) -> Exec<Option<LineRead>> {
    let mut stored = 0;
    let mut consumed = false;
    while stored < limit {
        let Some(b) = m.stdin_mut().next_byte() else {
            if !consumed {
                return Ok(None);
            }
            return Ok(Some(LineRead { stored, hit_limit: false }));
        };
        consumed = true;
        if b == b'\n' && !keep_newline {
            return Ok(Some(LineRead { stored, hit_limit: false }));
        }
        m.store(s.checked_add(stored)?, b)?;
        stored += 1;
        if b == b'\n' {
            return Ok(Some(LineRead { stored, hit_limit: false }));
        }
    }
    if !consumed && m.stdin().peek().is_none() {
        return Ok(None);
    }
    Ok(Some(LineRead { stored, hit_limit: true }))
}

/// Reads at most `n - 1` bytes, stopping after a newline, then NUL-terminates.
/// `n == 0` returns null without touching memory or the stream.
pub fn ref_fgets<B: Metadata>(m: &mut Machine<B>, s: Ref, n: usize) -> Exec<Option<Ref>> {
    Ok(fgets_line(m, s, n)?.0)
}

pub(crate) fn fgets_line<B: Metadata>(
    m: &mut Machine<B>,
    s: Ref,
    n: usize,
) -> Exec<(Option<Ref>, Option<LineRead>)> {
    if n == 0 {
        return Ok((None, None));
    }
    if n == 1 {
        m.store(s, 0)?;
        return Ok((Some(s), None));
    }
    match read_line(m, s, n - 1, true)? {
        None => Ok((None, None)),
        Some(line) => {
            m.store(s.checked_add(line.stored)?, 0)?;
            Ok((Some(s), Some(line)))
        }
    }
}

/// Reads a whole line with no bound, strips the newline.
pub fn ref_gets<B: Metadata>(m: &mut Machine<B>, s: Ref) -> Exec<Option<Ref>> {
    match read_line(m, s, usize::MAX, false)? {
        None => Ok(None),
        Some(line) => {
            m.store(s.checked_add(line.stored)?, 0)?;
            Ok(Some(s))
        }
    }
}
