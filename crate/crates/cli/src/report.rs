use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sizeright_core::backend::Backend;
use sizeright_core::bench::BenchResult;
use sizeright_core::policy::Policy;
use sizeright_core::scenario::{ExpectStatus, MatrixRow, Outcome, ReportCounters, RunReport};

pub fn run_text(r: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario  {}", r.name);
    let _ = writeln!(out, "backend   {} (redzone {})", r.config.backend_label, r.config.redzone);
    let _ = writeln!(out, "policy    {} (manufactured reads: {})", r.policy.name(), r.config.manufactured_sequence);
    let _ = writeln!(out, "outcome   {}", r.outcome);
    if let Some(line) = r.aborted_at_line {
        let _ = writeln!(out, "aborted   at line {line}");
    }
    let c = r.counters;
    let _ = writeln!(
        out,
        "counters  shadow_reads={} metadata_lookups={} bytes_clamped={} spilled_bytes={}",
        c.shadow_reads, c.metadata_lookups, c.bytes_clamped, r.spilled_bytes
    );
    if !r.events.is_empty() {
        let _ = writeln!(out, "events");
        for e in &r.events {
            let _ = writeln!(out, "  {e}");
        }
    }
    if !r.observations.is_empty() {
        let _ = writeln!(out, "observed");
        for o in &r.observations {
            let _ = writeln!(out, "  line {:<3} {} -> {}", o.line, o.command, o.value);
        }
    }
    if !r.expectations.is_empty() {
        let _ = writeln!(out, "expectations");
        for e in &r.expectations {
            let tag = match e.status {
                ExpectStatus::Passed => "PASS",
                ExpectStatus::Failed => "FAIL",
                ExpectStatus::Skipped => "SKIP",
            };
            let _ = write!(out, "  {tag} line {:<3} {}", e.line, e.what);
            match (&e.status, &e.actual) {
                (ExpectStatus::Failed, Some(a)) => {
                    let _ = writeln!(out, " (got {a})");
                }
                _ => out.push('\n'),
            }
        }
    }
    out
}

/// One matrix cell as emitted by `corpus --all --format json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub scenario: String,
    pub backend: Backend,
    pub policy: Policy,
    pub outcome: Option<Outcome>,
    pub expected: Option<Outcome>,
    pub held: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counters: Option<ReportCounters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub cells: Vec<MatrixCell>,
    pub held: usize,
    pub total: usize,
}

pub fn summarize(rows: &[MatrixRow]) -> MatrixSummary {
    let cells: Vec<MatrixCell> = rows
        .iter()
        .map(|row| {
            let (counters, events, error) = match &row.report {
                Ok(r) => (Some(r.counters), Some(r.events.len()), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            MatrixCell {
                scenario: row.scenario.clone(),
                backend: row.backend,
                policy: row.policy,
                outcome: row.outcome(),
                expected: row.expected,
                held: row.held(),
                counters,
                events,
                error,
            }
        })
        .collect();
    MatrixSummary {
        held: cells.iter().filter(|c| c.held).count(),
        total: cells.len(),
        cells,
    }
}

fn short(o: Option<Outcome>) -> &'static str {
    match o {
        Some(Outcome::CompletedClean) => "clean",
        Some(Outcome::MitigatedContinued) => "mitigated",
        Some(Outcome::AbortedDetected) => "aborted",
        Some(Outcome::SilentCorruption) => "corrupted",
        None => "error",
    }
}

pub fn matrix_text(m: &MatrixSummary) -> String {
    let mut out = String::new();
    let policies: Vec<Policy> = Policy::ALL.to_vec();
    let _ = write!(out, "{:<24} {:<7}", "scenario", "backend");
    for p in &policies {
        let _ = write!(out, " {:<11}", p.name());
    }
    out.push('\n');
    // cells arrive grouped by scenario, then backend, then policy
    for group in m.cells.chunks(policies.len()) {
        let first = &group[0];
        let _ = write!(out, "{:<24} {:<7}", first.scenario, first.backend.name());
        for c in group {
            let mark = if c.held { "" } else { "!" };
            let _ = write!(out, " {:<11}", format!("{}{mark}", short(c.outcome)));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{}/{} cells as declared", m.held, m.total);
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: String,
    pub backend: Backend,
    pub string_length: usize,
    pub reps: u64,
    pub shadow_reads: u64,
    pub metadata_lookups: u64,
    pub stable: bool,
    pub wall_ns_per_call: f64,
    pub baseline_ns_per_call: f64,
}

impl From<&BenchResult> for BenchRow {
    fn from(r: &BenchResult) -> Self {
        let per = |d: std::time::Duration| d.as_nanos() as f64 / r.reps.max(1) as f64;
        BenchRow {
            op: r.op.name().to_string(),
            backend: r.backend,
            string_length: r.string_length,
            reps: r.reps,
            shadow_reads: r.shadow_reads,
            metadata_lookups: r.metadata_lookups,
            stable: r.stable,
            wall_ns_per_call: per(r.wall_time),
            baseline_ns_per_call: per(r.baseline_wall_time),
        }
    }
}

pub fn bench_text(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<7} {:>7} {:>13} {:>16} {:>12} {:>9}",
        "op", "backend", "length", "shadow_reads", "metadata_lookups", "ns/call", "overhead"
    );
    for r in rows {
        let overhead = if r.baseline_ns_per_call > 0.0 {
            format!("{:.1}x", r.wall_ns_per_call / r.baseline_ns_per_call)
        } else {
            "-".to_string()
        };
        let _ = writeln!(
            out,
            "{:<10} {:<7} {:>7} {:>13} {:>16} {:>12.0} {:>9}{}",
            r.op,
            r.backend.name(),
            r.string_length,
            r.shadow_reads,
            r.metadata_lookups,
            r.wall_ns_per_call,
            overhead,
            if r.stable { "" } else { "  (unstable counters)" }
        );
    }
    out
}
