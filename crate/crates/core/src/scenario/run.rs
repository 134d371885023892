use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::{escape_bytes, BufRef, Command, Expected, Operand, Outcome, Scenario};
use crate::arena::Ref;
use crate::backend::{AnyBackend, Backend, Metadata, DEFAULT_REDZONE};
use crate::libc::{LibcCall, LibcFn, Ret};
use crate::policy::{self, Event, EventKind, Exec, FoState, Machine, Policy, Stop, DEFAULT_BUDGET};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub backend: Backend,
    pub policy: Policy,
    pub redzone: usize,
    /// Echoed in the report. The interpreter itself has no randomness.
    pub seed: u64,
    pub budget: u64,
}

impl RunConfig {
    pub fn new(backend: Backend, policy: Policy) -> Self {
        RunConfig {
            backend,
            policy,
            redzone: DEFAULT_REDZONE,
            seed: 0,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// A scenario that could not be executed at all (authoring or config error).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunError {
    pub scenario: String,
    pub line: Option<usize>,
    pub error: Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}: {} (line {l})", self.scenario, self.error),
            None => write!(f, "{}: {}", self.scenario, self.error),
        }
    }
}

impl core::error::Error for RunError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExpectStatus {
    Passed,
    Failed,
    /// Not reached because the run aborted first.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Expectation {
    pub line: usize,
    pub what: String,
    pub status: ExpectStatus,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub actual: Option<String>,
}

/// Values produced by `peek`, `load` and `call`.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Observation {
    pub line: usize,
    pub command: String,
    pub value: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReportCounters {
    pub shadow_reads: u64,
    pub metadata_lookups: u64,
    pub bytes_clamped: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfigEcho {
    pub backend_label: String,
    pub redzone: usize,
    pub manufactured_sequence: String,
    pub seed: u64,
    pub budget: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunReport {
    pub name: String,
    pub backend: Backend,
    pub policy: Policy,
    pub outcome: Outcome,
    pub events: Vec<Event>,
    pub counters: ReportCounters,
    pub config: ConfigEcho,
    pub expectations: Vec<Expectation>,
    pub failed_expectation: bool,
    pub observations: Vec<Observation>,
    pub spilled_bytes: usize,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub aborted_at_line: Option<usize>,
}

impl RunReport {
    pub fn abort_cause(&self) -> Option<&Event> {
        let i = self.events.iter().position(|e| e.kind == EventKind::Abort)?;
        i.checked_sub(1).map(|j| &self.events[j])
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

struct Interp<'s> {
    m: Machine,
    bufs: BTreeMap<&'s str, Ref>,
    last_ret: Option<Ret>,
    expectations: Vec<Expectation>,
    observations: Vec<Observation>,
    backend: Backend,
    policy: Policy,
}

impl<'s> Interp<'s> {
    fn resolve(&self, b: &BufRef) -> Exec<Ref> {
        // the parser guarantees declaration order; a missing entry means the
        // alloc itself failed earlier, which already ended the run
        let base = self.bufs[b.name.as_str()];
        Ok(base.checked_add(b.offset)?)
    }

    fn call(&self, f: LibcFn, ops: &[Operand]) -> Exec<LibcCall> {
        let ptr = |i: usize| match &ops[i] {
            Operand::Ptr(b) => self.resolve(b),
            _ => unreachable!("parser checked signature"),
        };
        let count = |i: usize| match ops[i] {
            Operand::Count(n) => n,
            _ => unreachable!("parser checked signature"),
        };
        Ok(match f {
            LibcFn::Strlen => LibcCall::Strlen { s: ptr(0)? },
            LibcFn::Strnlen => LibcCall::Strnlen { s: ptr(0)?, n: count(1) },
            LibcFn::Strcpy => LibcCall::Strcpy { dest: ptr(0)?, src: ptr(1)? },
            LibcFn::Strncpy => LibcCall::Strncpy { dest: ptr(0)?, src: ptr(1)?, n: count(2) },
            LibcFn::Strcat => LibcCall::Strcat { dest: ptr(0)?, src: ptr(1)? },
            LibcFn::Memcpy => LibcCall::Memcpy { dest: ptr(0)?, src: ptr(1)?, n: count(2) },
            LibcFn::Memset => {
                let Operand::Byte(c) = ops[1] else { unreachable!("parser checked signature") };
                LibcCall::Memset { dest: ptr(0)?, c, n: count(2) }
            }
            LibcFn::Gets => LibcCall::Gets { s: ptr(0)? },
            LibcFn::Fgets => LibcCall::Fgets { s: ptr(0)?, n: count(1) },
        })
    }

    fn describe(&self, ret: Ret) -> String {
        match ret {
            Ret::Size(n) => n.to_string(),
            Ret::Null => "null".to_string(),
            Ret::Ptr(r) => {
                let name = self
                    .m
                    .arena()
                    .get(r.alloc)
                    .map_or("?", |a| a.tag());
                if r.offset == 0 {
                    name.to_string()
                } else {
                    format!("{name}+{}", r.offset)
                }
            }
        }
    }

    fn expect(&mut self, line: usize, what: String, ok: bool, actual: String) {
        self.expectations.push(Expectation {
            line,
            what,
            status: if ok { ExpectStatus::Passed } else { ExpectStatus::Failed },
            actual: Some(actual),
        });
    }

    fn step(&mut self, line: usize, cmd: &'s Command) -> Exec<()> {
        match cmd {
            Command::Alloc { name, size, region } => {
                let r = self.m.alloc(*size, *region, name)?;
                self.bufs.insert(name, r);
            }
            Command::Free(b) => {
                let r = self.resolve(b)?;
                self.m.free(r)?;
            }
            Command::Poke(b, bytes) => {
                let r = self.resolve(b)?;
                self.m.arena_mut().raw_write(r, bytes)?;
            }
            Command::Peek(b, len) => {
                let r = self.resolve(b)?;
                let bytes = self.m.arena().raw_read(r, *len)?;
                self.observations.push(Observation {
                    line,
                    command: format!("peek {b}"),
                    value: escape_bytes(&bytes),
                });
            }
            Command::Store(b, bytes) => {
                let r = self.resolve(b)?;
                self.m.store_all(r, bytes)?;
            }
            Command::Load(b, len) => {
                let r = self.resolve(b)?;
                let bytes = self.m.load_n(r, *len)?;
                self.observations.push(Observation {
                    line,
                    command: format!("load {b}"),
                    value: escape_bytes(&bytes),
                });
            }
            Command::Stdin(bytes) => self.m.stdin_mut().feed(bytes),
            Command::Call(f, ops) => {
                let call = self.call(*f, ops)?;
                let ret = policy::execute(&mut self.m, &call)?;
                self.last_ret = Some(ret);
                self.observations.push(Observation {
                    line,
                    command: format!("call {f}"),
                    value: self.describe(ret),
                });
            }
            Command::ExpectBytes(b, want, filter) => {
                if filter.matches(self.backend, self.policy) {
                    let r = self.resolve(b)?;
                    let got = self.m.arena().raw_read(r, want.len())?;
                    let what = format!("expect_bytes {b} \"{}\"", escape_bytes(want));
                    self.expect(line, what, &got == want, escape_bytes(&got));
                }
            }
            Command::ExpectReturn(want, filter) => {
                if filter.matches(self.backend, self.policy) {
                    let ok = match (want, self.last_ret) {
                        (Expected::Size(n), Some(Ret::Size(got))) => *n == got,
                        (Expected::Null, Some(Ret::Null)) => true,
                        (Expected::Ptr(b), Some(Ret::Ptr(got))) => self.resolve(b)? == got,
                        _ => false,
                    };
                    let what = match want {
                        Expected::Size(n) => format!("expect_return {n}"),
                        Expected::Null => "expect_return null".to_string(),
                        Expected::Ptr(b) => format!("expect_return {b}"),
                    };
                    let actual = self.last_ret.map_or("<no call>".to_string(), |r| self.describe(r));
                    self.expect(line, what, ok, actual);
                }
            }
            Command::ExpectOutcome(..) => {}
        }
        Ok(())
    }
}

/// Executes a scenario against a fresh arena.
pub fn run(s: &Scenario, cfg: &RunConfig) -> Result<RunReport, RunError> {
    let fail = |line, error| RunError {
        scenario: s.name.clone(),
        line,
        error,
    };
    let meta = AnyBackend::new(cfg.backend, cfg.redzone).map_err(|e| fail(None, e))?;
    let mut it = Interp {
        m: Machine::new(meta, cfg.policy).with_budget(cfg.budget),
        bufs: BTreeMap::new(),
        last_ret: None,
        expectations: Vec::new(),
        observations: Vec::new(),
        backend: cfg.backend,
        policy: cfg.policy,
    };

    let mut aborted_at = None;
    for st in &s.statements {
        if aborted_at.is_some() {
            let skipped = match &st.command {
                Command::ExpectBytes(b, want, f) if f.matches(cfg.backend, cfg.policy) => {
                    Some(format!("expect_bytes {b} \"{}\"", escape_bytes(want)))
                }
                Command::ExpectReturn(_, f) if f.matches(cfg.backend, cfg.policy) => {
                    Some("expect_return".to_string())
                }
                _ => None,
            };
            if let Some(what) = skipped {
                it.expectations.push(Expectation {
                    line: st.line,
                    what,
                    status: ExpectStatus::Skipped,
                    actual: None,
                });
            }
            continue;
        }
        match it.step(st.line, &st.command) {
            Ok(()) => {}
            Err(Stop::Abort(_)) => aborted_at = Some(st.line),
            Err(Stop::Fault(e)) => return Err(fail(Some(st.line), e)),
        }
    }

    let spilled = it.m.arena().spilled_bytes();
    let outcome = if aborted_at.is_some() {
        Outcome::AbortedDetected
    } else if spilled > 0 {
        Outcome::SilentCorruption
    } else if it.m.mitigated() {
        Outcome::MitigatedContinued
    } else {
        Outcome::CompletedClean
    };

    for st in &s.statements {
        if let Command::ExpectOutcome(want, f) = &st.command {
            if f.matches(cfg.backend, cfg.policy) {
                it.expect(
                    st.line,
                    format!("expect_outcome {want}"),
                    *want == outcome,
                    outcome.name().to_string(),
                );
            }
        }
    }

    let meta_counters = it.m.metadata().counters();
    let run_counters = it.m.counters();
    let failed_expectation = it
        .expectations
        .iter()
        .any(|e| e.status == ExpectStatus::Failed);
    Ok(RunReport {
        name: s.name.clone(),
        backend: cfg.backend,
        policy: cfg.policy,
        outcome,
        counters: ReportCounters {
            shadow_reads: meta_counters.shadow_reads,
            metadata_lookups: meta_counters.metadata_lookups,
            bytes_clamped: run_counters.bytes_clamped,
        },
        config: ConfigEcho {
            backend_label: cfg.backend.label().to_string(),
            redzone: cfg.redzone,
            manufactured_sequence: FoState::SEQUENCE.to_string(),
            seed: cfg.seed,
            budget: cfg.budget,
        },
        expectations: it.expectations,
        failed_expectation,
        observations: it.observations,
        spilled_bytes: spilled,
        aborted_at_line: aborted_at,
        events: it.m.into_events(),
    })
}

/// One cell of a scenario × backend × policy sweep.
#[derive(Clone, Debug)]
pub struct MatrixRow {
    pub scenario: String,
    pub backend: Backend,
    pub policy: Policy,
    pub expected: Option<Outcome>,
    pub report: Result<RunReport, RunError>,
}

impl MatrixRow {
    pub fn outcome(&self) -> Option<Outcome> {
        self.report.as_ref().ok().map(|r| r.outcome)
    }

    /// Ran, every expectation held, and the outcome matches the declared one.
    pub fn held(&self) -> bool {
        match &self.report {
            Ok(r) => !r.failed_expectation && self.expected.is_none_or(|e| e == r.outcome),
            Err(_) => false,
        }
    }
}

pub fn matrix(
    scenarios: &[Scenario],
    backends: &[Backend],
    policies: &[Policy],
    template: &RunConfig,
) -> Vec<MatrixRow> {
    let mut rows = Vec::new();
    for s in scenarios {
        for &backend in backends {
            for &policy in policies {
                let cfg = RunConfig {
                    backend,
                    policy,
                    ..template.clone()
                };
                rows.push(MatrixRow {
                    scenario: s.name.clone(),
                    backend,
                    policy,
                    expected: s.expected_outcome(backend, policy),
                    report: run(s, &cfg),
                });
            }
        }
    }
    rows
}
