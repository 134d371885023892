use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sizeright::report::{self, BenchRow};
use sizeright_core::backend::{Backend, DEFAULT_REDZONE};
use sizeright_core::bench::{bench_size_right, BenchOp};
use sizeright_core::policy::{Policy, DEFAULT_BUDGET};
use sizeright_core::scenario::{self, corpus, RunConfig, Scenario};

#[derive(Parser)]
#[command(name = "sizeright", version, about = "Bounds introspection and failure-oblivious libc interceptors, replayed on a model heap")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file, or a bundled one as `corpus:NAME`.
    Run {
        target: String,
        #[arg(long, default_value = "shadow", value_parser = parse_backend)]
        backend: Backend,
        #[arg(long, default_value = "context", value_parser = parse_policy)]
        policy: Policy,
        /// Echoed in the report; runs are deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REDZONE)]
        redzone: usize,
        /// Maximum checked accesses before the run is cut off.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Bundled scenarios: list, print, or run the full backend x policy matrix.
    Corpus {
        #[arg(long)]
        all: bool,
        #[arg(long, conflicts_with = "all")]
        show: Option<String>,
        #[arg(long, default_value_t = DEFAULT_REDZONE)]
        redzone: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Count metadata work per introspecting call.
    Bench {
        #[arg(long, default_value = "strlen", value_parser = parse_op)]
        op: BenchOp,
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100, 500, 1000])]
        lengths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "shadow,bounds", value_parser = parse_backend)]
        backend: Vec<Backend>,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        #[arg(long, default_value_t = DEFAULT_REDZONE)]
        redzone: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|_| format!("expected one of: {}", names(Backend::ALL.map(Backend::name))))
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|_| format!("expected one of: {}", names(Policy::ALL.map(Policy::name))))
}

fn parse_op(s: &str) -> Result<BenchOp, String> {
    s.parse().map_err(|_| "expected one of: strlen, size_right".to_string())
}

fn names<const N: usize>(n: [&str; N]) -> String {
    n.join(", ")
}

/// Failures that mean the invocation itself was wrong (exit 2).
struct Usage(anyhow::Error);

fn load(target: &str) -> Result<Scenario, Usage> {
    if let Some(name) = target.strip_prefix("corpus:") {
        return corpus::get(name).ok_or_else(|| {
            let known: Vec<&str> = corpus::SOURCES.iter().map(|(n, _)| *n).collect();
            Usage(anyhow!("no bundled scenario '{name}' (have: {})", known.join(", ")))
        });
    }
    let path = PathBuf::from(target);
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Usage)?;
    let name = path.file_stem().map_or(target.into(), |s| s.to_string_lossy().into_owned());
    scenario::parse(&name, &text)
        .map_err(|e| Usage(anyhow!("{}: {e}", path.display())))
}

/// Writes `text` plus a trailing newline if missing. A closed pipe is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn execute(cmd: Cmd) -> Result<bool, Usage> {
    match cmd {
        Cmd::Run { target, backend, policy, seed, redzone, budget, format } => {
            let s = load(&target)?;
            let cfg = RunConfig { backend, policy, redzone, seed, budget };
            let r = scenario::run(&s, &cfg).map_err(|e| Usage(e.into()))?;
            match format {
                Format::Text => emit(&report::run_text(&r)),
                Format::Json => emit(&json(&r).map_err(Usage)?),
            }
            let declared = s.expected_outcome(backend, policy);
            Ok(!r.failed_expectation && declared.is_none_or(|o| o == r.outcome))
        }
        Cmd::Corpus { all, show, redzone, format } => {
            if let Some(name) = show {
                let text = corpus::source(&name).ok_or_else(|| Usage(anyhow!("no bundled scenario '{name}'")))?;
                emit(text);
                return Ok(true);
            }
            if !all {
                let names: Vec<&str> = corpus::SOURCES.iter().map(|(n, _)| *n).collect();
                emit(&names.join("\n"));
                return Ok(true);
            }
            let mut template = RunConfig::new(Backend::Null, Policy::Abort);
            template.redzone = redzone;
            let rows = scenario::matrix(&corpus::corpus(), &Backend::ALL, &Policy::ALL, &template);
            let summary = report::summarize(&rows);
            match format {
                Format::Text => emit(&report::matrix_text(&summary)),
                Format::Json => emit(&json(&summary).map_err(Usage)?),
            }
            Ok(summary.held == summary.total)
        }
        Cmd::Bench { op, lengths, backend, reps, redzone, format } => {
            let origin = Instant::now();
            let mut clock = || origin.elapsed();
            let mut rows = Vec::new();
            for b in backend {
                let results = bench_size_right(op, b, &lengths, reps, redzone, &mut clock)
                    .map_err(|e| Usage(e.into()))?;
                rows.extend(results.iter().map(BenchRow::from));
            }
            match format {
                Format::Text => emit(&report::bench_text(&rows)),
                Format::Json => emit(&json(&rows).map_err(Usage)?),
            }
            Ok(rows.iter().all(|r| r.stable))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
