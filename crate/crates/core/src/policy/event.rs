use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EventKind {
    OobRead,
    OobWrite,
    UseAfterFree,
    InvalidFree,
    Clamp,
    Truncation,
    ManufacturedRead,
    DroppedWrite,
    ConservativeEstimate,
    Abort,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::OobRead => "oob_read",
            EventKind::OobWrite => "oob_write",
            EventKind::UseAfterFree => "use_after_free",
            EventKind::InvalidFree => "invalid_free",
            EventKind::Clamp => "clamp",
            EventKind::Truncation => "truncation",
            EventKind::ManufacturedRead => "manufactured_read",
            EventKind::DroppedWrite => "dropped_write",
            EventKind::ConservativeEstimate => "conservative_estimate",
            EventKind::Abort => "abort",
        }
    }

    /// Events that mean an error was absorbed and execution went on.
    pub fn is_mitigation(self) -> bool {
        matches!(
            self,
            EventKind::Clamp
                | EventKind::Truncation
                | EventKind::ManufacturedRead
                | EventKind::DroppedWrite
                | EventKind::InvalidFree
        )
    }

    fn coalesces(self) -> bool {
        matches!(self, EventKind::ManufacturedRead | EventKind::DroppedWrite)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Detail {
    /// Tag of the allocation involved.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub buffer: Option<String>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub offset: Option<usize>,
    /// Bytes covered: accessed, granted after a clamp, or copied before a truncation.
    pub len: usize,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub requested: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub kind: EventKind,
    /// libc function name, or `user` for accesses made by scenario code.
    pub site: String,
    pub detail: Detail,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}", self.kind, self.site)?;
        let d = &self.detail;
        if let Some(b) = &d.buffer {
            write!(f, " {b}")?;
            if let Some(o) = d.offset {
                write!(f, "+{o}")?;
            }
        }
        match d.requested {
            Some(req) => write!(f, " {req}->{}", d.len)?,
            None => write!(f, " len={}", d.len)?,
        }
        if let Some(n) = &d.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

/// Append-only run log. Runs of contiguous dropped writes or manufactured
/// reads from one site collapse into a single event.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, ev: Event) {
        if let Some(last) = self.events.last_mut() {
            let contiguous = last.kind == ev.kind
                && ev.kind.coalesces()
                && last.site == ev.site
                && last.detail.buffer == ev.detail.buffer
                && last.detail.note == ev.detail.note
                && last
                    .detail
                    .offset
                    .and_then(|o| o.checked_add(last.detail.len))
                    .is_some_and(|end| Some(end) == ev.detail.offset);
            if contiguous {
                last.detail.len += ev.detail.len;
                return;
            }
        }
        self.events.push(ev);
    }

    pub fn as_slice(&self) -> &[Event] {
        &self.events
    }

    pub fn into_vec(self) -> Vec<Event> {
        self.events
    }

    pub fn any(&self, pred: impl Fn(&Event) -> bool) -> bool {
        self.events.iter().any(pred)
    }
}
