//! Recovery policies and the execution engine that applies them.
//!
//! A [`Machine`] owns the arena, the metadata backend and the run state. Every
//! checked access goes through [`Machine::load`] / [`Machine::store`], which ask
//! the backend for a verdict and let [`handle_verdict`] decide what happens on
//! a violation.

use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use crate::arena::{Arena, Ref, Region};
use crate::backend::{AccessKind, AccessVerdict, AnyBackend, Metadata, SizeEstimate, UnknownName};
use crate::libc::{self, LibcCall, Ret};
use crate::Error;

mod event;

pub use event::{Detail, Event, EventKind, EventLog};

/// Site name for accesses made outside any libc function.
pub const USER_SITE: &str = "user";

/// Default cap on checked accesses per run.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Policy {
    /// Abort on the first detected violation.
    #[cfg_attr(feature = "serde", serde(rename = "abort"))]
    Abort,
    /// Discard invalid writes, manufacture values for invalid reads.
    #[cfg_attr(feature = "serde", serde(rename = "oblivious"))]
    ClassicFo,
    /// Introspection interceptors for libc; abort on anything they don't guard.
    #[cfg_attr(feature = "serde", serde(rename = "context"))]
    ContextAware,
    /// Introspection interceptors, classic failure-oblivious fallback elsewhere.
    #[cfg_attr(feature = "serde", serde(rename = "context+fo"))]
    ContextFallback,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Abort,
        Policy::ClassicFo,
        Policy::ContextAware,
        Policy::ContextFallback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Abort => "abort",
            Policy::ClassicFo => "oblivious",
            Policy::ContextAware => "context",
            Policy::ContextFallback => "context+fo",
        }
    }

    pub fn uses_interceptors(self) -> bool {
        matches!(self, Policy::ContextAware | Policy::ContextFallback)
    }

    fn absorbs_violations(self) -> bool {
        matches!(self, Policy::ClassicFo | Policy::ContextFallback)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or(UnknownName)
    }
}

/// Manufactured-read state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FoState {
    manufactured: u64,
}

impl FoState {
    pub const SEQUENCE: &'static str = "alternating 0,1";

    pub fn manufactured_count(&self) -> u64 {
        self.manufactured
    }
}

/// Next manufactured byte: 0 on even counts, 1 on odd.
pub fn manufactured_value(fo: &mut FoState) -> u8 {
    let v = (fo.manufactured % 2) as u8;
    fo.manufactured += 1;
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Permit,
    Abort,
    DiscardWrite,
    Manufacture(u8),
}

pub fn handle_verdict(
    verdict: AccessVerdict,
    kind: AccessKind,
    policy: Policy,
    fo: &mut FoState,
) -> Action {
    if verdict == AccessVerdict::Allowed {
        return Action::Permit;
    }
    if !policy.absorbs_violations() {
        return Action::Abort;
    }
    match kind {
        AccessKind::Write => Action::DiscardWrite,
        AccessKind::Read => Action::Manufacture(manufactured_value(fo)),
    }
}

/// Why an execution stopped early.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stop {
    /// A violation terminated the run; carries the detection event.
    Abort(Event),
    Fault(Error),
}

impl From<Error> for Stop {
    fn from(e: Error) -> Self {
        Stop::Fault(e)
    }
}

pub type Exec<T> = Result<T, Stop>;

/// Bytes available to `gets`/`fgets`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InputStream {
    data: alloc::vec::Vec<u8>,
    pos: usize,
}

impl InputStream {
    pub fn new(data: &[u8]) -> Self {
        InputStream {
            data: data.to_vec(),
            pos: 0,
        }
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.data.extend_from_slice(bytes);
    }

    pub fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    pub fn next_byte(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Unread bytes up to and excluding the next newline.
    pub fn pending_line_len(&self) -> usize {
        self.data[self.pos..]
            .iter()
            .take_while(|&&b| b != b'\n')
            .count()
    }
}

/// Counters kept by the policy engine itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub bytes_clamped: u64,
    pub checked_accesses: u64,
}

pub struct Machine<B = AnyBackend> {
    arena: Arena,
    meta: B,
    policy: Policy,
    fo: FoState,
    log: EventLog,
    stdin: InputStream,
    site: &'static str,
    counters: RunCounters,
    budget: u64,
}

impl<B: Metadata> Machine<B> {
    pub fn new(meta: B, policy: Policy) -> Self {
        Machine {
            arena: Arena::new(),
            meta,
            policy,
            fo: FoState::default(),
            log: EventLog::default(),
            stdin: InputStream::default(),
            site: USER_SITE,
            counters: RunCounters::default(),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    /// Direct arena access for setup code; bypasses every check.
    pub fn arena_mut(&mut self) -> &mut Arena {
        &mut self.arena
    }

    pub fn metadata(&self) -> &B {
        &self.meta
    }

    pub fn events(&self) -> &[Event] {
        self.log.as_slice()
    }

    pub fn into_events(self) -> alloc::vec::Vec<Event> {
        self.log.into_vec()
    }

    pub fn fo_state(&self) -> FoState {
        self.fo
    }

    pub fn counters(&self) -> RunCounters {
        self.counters
    }

    pub fn stdin(&self) -> &InputStream {
        &self.stdin
    }

    pub fn stdin_mut(&mut self) -> &mut InputStream {
        &mut self.stdin
    }

    pub fn site(&self) -> &'static str {
        self.site
    }

    pub fn alloc(&mut self, size: usize, region: Region, tag: &str) -> Result<Ref, Error> {
        let r = self.arena.alloc(size, region, tag)?;
        self.meta.install(r.alloc, size)?;
        Ok(r)
    }

    pub fn free(&mut self, r: Ref) -> Exec<()> {
        match self.arena.free(r) {
            Ok(()) => Ok(self.meta.retire(r.alloc)?),
            Err(crate::arena::FreeError::Unknown) => Err(Error::UnknownAllocation(r.alloc).into()),
            Err(why) => {
                let note = match why {
                    crate::arena::FreeError::DoubleFree => "double free",
                    _ => "interior free",
                };
                let ev = self.event(EventKind::InvalidFree, r, 0, None, Some(note));
                self.log.push(ev.clone());
                if self.policy.absorbs_violations() {
                    Ok(())
                } else {
                    Err(self.abort(ev))
                }
            }
        }
    }

    /// `size_right` through the backend. Conservative answers are logged,
    /// since clamping to them can still overflow into padding.
    pub fn size_right(&mut self, r: Ref) -> SizeEstimate {
        let est = self.meta.size_right(r);
        if let SizeEstimate::Conservative(n) = est {
            let ev = self.event(EventKind::ConservativeEstimate, r, n, None, None);
            self.log.push(ev);
        }
        est
    }

    fn tick(&mut self) -> Exec<()> {
        self.counters.checked_accesses += 1;
        if self.counters.checked_accesses > self.budget {
            return Err(Error::BudgetExhausted(self.budget).into());
        }
        Ok(())
    }

    /// Checked one-byte read.
    pub fn load(&mut self, r: Ref) -> Exec<u8> {
        self.tick()?;
        let verdict = self.meta.check_access(r, 1, AccessKind::Read);
        match handle_verdict(verdict, AccessKind::Read, self.policy, &mut self.fo) {
            Action::Permit => Ok(self.arena.raw_read_byte(r)?),
            Action::Manufacture(b) => {
                let ev = self.event(EventKind::ManufacturedRead, r, 1, None, Some(verdict_note(verdict)));
                self.log.push(ev);
                Ok(b)
            }
            Action::Abort | Action::DiscardWrite => Err(self.detect(verdict, AccessKind::Read, r)),
        }
    }

    /// Checked one-byte write.
    pub fn store(&mut self, r: Ref, byte: u8) -> Exec<()> {
        self.tick()?;
        let verdict = self.meta.check_access(r, 1, AccessKind::Write);
        match handle_verdict(verdict, AccessKind::Write, self.policy, &mut self.fo) {
            Action::Permit => Ok(self.arena.raw_write_byte(r, byte)?),
            Action::DiscardWrite => {
                let ev = self.event(EventKind::DroppedWrite, r, 1, None, Some(verdict_note(verdict)));
                self.log.push(ev);
                Ok(())
            }
            Action::Abort | Action::Manufacture(_) => Err(self.detect(verdict, AccessKind::Write, r)),
        }
    }

    pub fn store_all(&mut self, r: Ref, bytes: &[u8]) -> Exec<()> {
        for (i, &b) in bytes.iter().enumerate() {
            self.store(r.checked_add(i)?, b)?;
        }
        Ok(())
    }

    pub fn load_n(&mut self, r: Ref, n: usize) -> Exec<alloc::vec::Vec<u8>> {
        (0..n).map(|i| self.load(r.checked_add(i)?)).collect()
    }

    /// Runs `f` with events attributed to `site`.
    pub fn with_site<T>(&mut self, site: &'static str, f: impl FnOnce(&mut Self) -> T) -> T {
        let saved = core::mem::replace(&mut self.site, site);
        let out = f(self);
        self.site = saved;
        out
    }

    /// Records that a request for `requested` bytes at `r` was cut to `granted`.
    pub fn note_clamp(&mut self, r: Ref, requested: usize, granted: usize) {
        if granted < requested {
            self.counters.bytes_clamped = self
                .counters
                .bytes_clamped
                .saturating_add((requested - granted) as u64);
            let ev = self.event(EventKind::Clamp, r, granted, Some(requested), None);
            self.log.push(ev);
        }
    }

    /// Records a string operation that copied `kept` of `wanted` bytes.
    pub fn note_truncation(&mut self, r: Ref, wanted: usize, kept: usize, note: &str) {
        self.counters.bytes_clamped = self
            .counters
            .bytes_clamped
            .saturating_add(wanted.saturating_sub(kept) as u64);
        let ev = self.event(EventKind::Truncation, r, kept, Some(wanted), Some(note));
        self.log.push(ev);
    }

    /// True once any error has been absorbed instead of aborting.
    pub fn mitigated(&self) -> bool {
        self.log.any(|e| e.kind.is_mitigation())
    }

    fn detect(&mut self, verdict: AccessVerdict, kind: AccessKind, r: Ref) -> Stop {
        let ek = match (verdict, kind) {
            (AccessVerdict::UseAfterFree, _) => EventKind::UseAfterFree,
            (_, AccessKind::Read) => EventKind::OobRead,
            (_, AccessKind::Write) => EventKind::OobWrite,
        };
        let ev = self.event(ek, r, 1, None, None);
        self.log.push(ev.clone());
        self.abort(ev)
    }

    fn abort(&mut self, cause: Event) -> Stop {
        let mut ev = cause.clone();
        ev.kind = EventKind::Abort;
        ev.detail.note = Some(cause.kind.name().to_string());
        self.log.push(ev);
        Stop::Abort(cause)
    }

    fn event(
        &self,
        kind: EventKind,
        r: Ref,
        len: usize,
        requested: Option<usize>,
        note: Option<&str>,
    ) -> Event {
        Event {
            kind,
            site: self.site.to_string(),
            detail: Detail {
                buffer: self.arena.get(r.alloc).map(|a| String::from(a.tag())),
                offset: Some(r.offset),
                len,
                requested,
                note: note.map(String::from),
            },
        }
    }
}

fn verdict_note(v: AccessVerdict) -> &'static str {
    match v {
        AccessVerdict::UseAfterFree => "use_after_free",
        _ => "out_of_bounds",
    }
}

/// Runs one libc call under the machine's policy. Interceptor policies go to
/// the `cs_*` functions, the others to the ISO reference implementations.
pub fn execute<B: Metadata>(m: &mut Machine<B>, call: &LibcCall) -> Exec<Ret> {
    let site = call.function().name();
    if m.policy().uses_interceptors() {
        m.with_site(site, |m| libc::intercept::dispatch(m, call))
    } else {
        m.with_site(site, |m| libc::reference::dispatch(m, call))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;

    fn machine(backend: Backend, policy: Policy) -> Machine {
        Machine::new(AnyBackend::with_default_redzone(backend), policy)
    }

    #[test]
    fn manufactured_sequence_alternates() {
        let mut fo = FoState::default();
        let got: alloc::vec::Vec<u8> = (0..3).map(|_| manufactured_value(&mut fo)).collect();
        assert_eq!(got, [0, 1, 0]);
        manufactured_value(&mut fo);
        assert_eq!(fo.manufactured_count() % 2, 0);
    }

    #[test]
    fn verdict_table() {
        let mut fo = FoState::default();
        use AccessKind::*;
        use AccessVerdict::*;
        assert_eq!(handle_verdict(OutOfBounds, Write, Policy::ClassicFo, &mut fo), Action::DiscardWrite);
        assert_eq!(handle_verdict(OutOfBounds, Write, Policy::ContextAware, &mut fo), Action::Abort);
        assert_eq!(handle_verdict(UseAfterFree, Read, Policy::Abort, &mut fo), Action::Abort);
        assert_eq!(handle_verdict(OutOfBounds, Read, Policy::ContextFallback, &mut fo), Action::Manufacture(0));
        assert_eq!(handle_verdict(OutOfBounds, Read, Policy::ClassicFo, &mut fo), Action::Manufacture(1));
        assert_eq!(handle_verdict(Allowed, Write, Policy::Abort, &mut fo), Action::Permit);
    }

    #[test]
    fn dropped_write_leaves_memory() {
        let mut m = machine(Backend::BoundsTable, Policy::ClassicFo);
        let r = m.alloc(4, Region::Heap, "b").unwrap();
        m.store(r.checked_add(4).unwrap(), b'x').unwrap();
        assert_eq!(m.arena().get(r.alloc).unwrap().content(), &[0; 4]);
        assert!(m.arena().get(r.alloc).unwrap().spill().is_empty());
        assert_eq!(m.events()[0].kind, EventKind::DroppedWrite);
        assert!(m.mitigated());
    }

    #[test]
    fn abort_stops_with_detection() {
        let mut m = machine(Backend::ShadowRedzone, Policy::Abort);
        let r = m.alloc(4, Region::Heap, "b").unwrap();
        let err = m.store(r.checked_add(4).unwrap(), b'x').unwrap_err();
        let Stop::Abort(cause) = err else { panic!("expected abort") };
        assert_eq!(cause.kind, EventKind::OobWrite);
        assert_eq!(cause.site, USER_SITE);
        let kinds: alloc::vec::Vec<_> = m.events().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [EventKind::OobWrite, EventKind::Abort]);
    }

    #[test]
    fn use_after_free_detected() {
        let mut m = machine(Backend::BoundsTable, Policy::Abort);
        let r = m.alloc(4, Region::Heap, "b").unwrap();
        m.free(r).unwrap();
        assert_eq!(m.size_right(r), SizeEstimate::Invalid);
        let Err(Stop::Abort(cause)) = m.load(r) else { panic!() };
        assert_eq!(cause.kind, EventKind::UseAfterFree);
    }

    #[test]
    fn double_and_interior_free() {
        let mut m = machine(Backend::BoundsTable, Policy::Abort);
        let r = m.alloc(4, Region::Heap, "b").unwrap();
        assert!(matches!(m.free(r.checked_add(3).unwrap()), Err(Stop::Abort(_))));
        let mut m = machine(Backend::BoundsTable, Policy::ClassicFo);
        let r = m.alloc(4, Region::Heap, "b").unwrap();
        m.free(r).unwrap();
        m.free(r).unwrap();
        assert_eq!(m.events()[0].kind, EventKind::InvalidFree);
    }

    #[test]
    fn null_backend_spills() {
        let mut m = machine(Backend::Null, Policy::Abort);
        let r = m.alloc(4, Region::Heap, "b").unwrap();
        m.store_all(r, &[7; 100]).unwrap();
        assert_eq!(m.arena().get(r.alloc).unwrap().spill().len(), 96);
        assert!(m.events().is_empty());
    }

    #[test]
    fn budget_is_enforced() {
        let mut m = machine(Backend::Null, Policy::Abort).with_budget(3);
        let r = m.alloc(8, Region::Heap, "b").unwrap();
        assert_eq!(m.load_n(r, 4), Err(Stop::Fault(Error::BudgetExhausted(3))));
    }

    #[test]
    fn policy_names() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>(), Ok(p));
        }
    }
}
