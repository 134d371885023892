//! Scenario DSL, interpreter and the bundled CVE corpus.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::arena::Region;
use crate::backend::Backend;
use crate::libc::LibcFn;
use crate::policy::Policy;

pub mod corpus;
mod parse;
mod run;

pub use parse::{parse, ParseError};
pub use run::{
    matrix, run, ConfigEcho, ExpectStatus, Expectation, MatrixRow, Observation, ReportCounters,
    RunConfig, RunError, RunReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Outcome {
    CompletedClean,
    MitigatedContinued,
    AbortedDetected,
    SilentCorruption,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::CompletedClean,
        Outcome::MitigatedContinued,
        Outcome::AbortedDetected,
        Outcome::SilentCorruption,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::CompletedClean => "COMPLETED_CLEAN",
            Outcome::MitigatedContinued => "MITIGATED_CONTINUED",
            Outcome::AbortedDetected => "ABORTED_DETECTED",
            Outcome::SilentCorruption => "SILENT_CORRUPTION",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        Outcome::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A buffer name plus byte offset, resolved at run time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BufRef {
    pub name: String,
    pub offset: usize,
}

impl fmt::Display for BufRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.offset == 0 {
            f.write_str(&self.name)
        } else {
            write!(f, "{}+{}", self.name, self.offset)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Ptr(BufRef),
    Count(usize),
    Byte(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expected {
    Size(usize),
    Ptr(BufRef),
    Null,
}

/// Restricts an expectation to some backends and policies. `None` matches all.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Filter {
    pub backends: Option<Vec<Backend>>,
    pub policies: Option<Vec<Policy>>,
}

impl Filter {
    pub fn matches(&self, backend: Backend, policy: Policy) -> bool {
        self.backends.as_ref().is_none_or(|b| b.contains(&backend))
            && self.policies.as_ref().is_none_or(|p| p.contains(&policy))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Alloc {
        name: String,
        size: usize,
        region: Region,
    },
    Free(BufRef),
    /// Setup write, bypasses checks.
    Poke(BufRef, Vec<u8>),
    /// Setup read, bypasses checks.
    Peek(BufRef, usize),
    /// Checked user-level write.
    Store(BufRef, Vec<u8>),
    /// Checked user-level read.
    Load(BufRef, usize),
    Stdin(Vec<u8>),
    Call(LibcFn, Vec<Operand>),
    ExpectBytes(BufRef, Vec<u8>, Filter),
    ExpectReturn(Expected, Filter),
    ExpectOutcome(Outcome, Filter),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub line: usize,
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub statements: Vec<Statement>,
}

impl Scenario {
    /// The outcome this scenario declares for a configuration. The last
    /// matching `expect_outcome` wins.
    pub fn expected_outcome(&self, backend: Backend, policy: Policy) -> Option<Outcome> {
        self.statements.iter().rev().find_map(|s| match &s.command {
            Command::ExpectOutcome(o, f) if f.matches(backend, policy) => Some(*o),
            _ => None,
        })
    }
}

/// Renders bytes in the DSL's literal syntax (without quotes).
pub fn escape_bytes(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\n' => out.push_str("\\n"),
            0 => out.push_str("\\0"),
            b'\\' => out.push_str("\\\\"),
            b'"' => out.push_str("\\\""),
            0x20..=0x7e => out.push(b as char),
            _ => {
                let _ = write!(out, "\\x{b:02x}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_is_parseable() {
        let raw = b"a\n\0\\\"\x7f\r";
        let text = alloc::format!("alloc b 8\npoke b 0 \"{}\"", escape_bytes(raw));
        let s = parse("t", &text).unwrap();
        assert_eq!(
            s.statements[1].command,
            Command::Poke(BufRef { name: "b".into(), offset: 0 }, raw.to_vec())
        );
    }

    #[test]
    fn outcome_names() {
        for o in Outcome::ALL {
            assert_eq!(Outcome::parse(o.name()), Some(o));
        }
    }
}
