//! Introspection cost, measured in backend operation counters.

use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;

use crate::arena::Region;
use crate::backend::{AnyBackend, Backend, Metadata};
use crate::libc::{intercept, reference};
use crate::policy::{Machine, Policy};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    /// `cs_strlen`: one `size_right` plus a bounded scan.
    Strlen,
    /// `size_right` alone.
    SizeRight,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Strlen => "strlen",
            BenchOp::SizeRight => "size_right",
        }
    }
}

impl core::str::FromStr for BenchOp {
    type Err = crate::backend::UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strlen" => Ok(BenchOp::Strlen),
            "size_right" => Ok(BenchOp::SizeRight),
            _ => Err(crate::backend::UnknownName),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchResult {
    pub op: BenchOp,
    pub backend: Backend,
    pub string_length: usize,
    pub reps: u64,
    /// Per call, from the first repetition.
    pub shadow_reads: u64,
    pub metadata_lookups: u64,
    /// False if any repetition's counter deltas differed from the first.
    pub stable: bool,
    /// Informational only.
    pub wall_time: Duration,
    /// Same loop over the uninstrumented `strlen`, for the overhead ratio.
    pub baseline_wall_time: Duration,
}

impl BenchResult {
    pub fn overhead(&self) -> Option<f64> {
        let base = self.baseline_wall_time.as_secs_f64();
        (base > 0.0).then(|| self.wall_time.as_secs_f64() / base)
    }
}

/// Runs `op` `reps` times over an L-byte NUL-terminated string in an
/// (L+1)-byte buffer for every L in `lengths`. `clock` returns elapsed time
/// since an arbitrary origin; pass `|| Duration::ZERO` where none exists.
pub fn bench_size_right(
    op: BenchOp,
    backend: Backend,
    lengths: &[usize],
    reps: u64,
    redzone: usize,
    clock: &mut dyn FnMut() -> Duration,
) -> Result<Vec<BenchResult>, Error> {
    let mut out = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let size = len.checked_add(1).ok_or(Error::OffsetOverflow)?;
        let mut m = Machine::new(AnyBackend::new(backend, redzone)?, Policy::ContextAware)
            .with_budget(u64::MAX);
        let s = m.alloc(size, Region::Heap, "bench")?;
        let mut text = vec![b'a'; len];
        text.push(0);
        m.arena_mut().raw_write(s, &text)?;

        let mut first = None;
        let mut stable = true;
        let start = clock();
        for _ in 0..reps {
            let before = m.metadata().counters();
            let got = match op {
                BenchOp::Strlen => intercept::cs_strlen(&mut m, s).map_err(stop_error)?,
                BenchOp::SizeRight => m.size_right(s).value(),
            };
            debug_assert!(got >= len);
            let after = m.metadata().counters();
            let delta = (
                after.shadow_reads - before.shadow_reads,
                after.metadata_lookups - before.metadata_lookups,
            );
            match first {
                None => first = Some(delta),
                Some(f) if f != delta => stable = false,
                _ => {}
            }
        }
        let wall_time = clock().saturating_sub(start);

        let mut base = Machine::new(AnyBackend::new(Backend::Null, redzone)?, Policy::Abort)
            .with_budget(u64::MAX);
        let t = base.alloc(size, Region::Heap, "baseline")?;
        base.arena_mut().raw_write(t, &text)?;
        let start = clock();
        for _ in 0..reps {
            reference::ref_strlen(&mut base, t).map_err(stop_error)?;
        }
        let baseline_wall_time = clock().saturating_sub(start);

        let (shadow_reads, metadata_lookups) = first.unwrap_or((0, 0));
        out.push(BenchResult {
            op,
            backend,
            string_length: len,
            reps,
            shadow_reads,
            metadata_lookups,
            stable,
            wall_time,
            baseline_wall_time,
        });
    }
    Ok(out)
}

fn stop_error(s: crate::policy::Stop) -> Error {
    match s {
        crate::policy::Stop::Fault(e) => e,
        // a terminated string inside its buffer never trips a check
        crate::policy::Stop::Abort(_) => unreachable!("benchmark input is in bounds"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::DEFAULT_REDZONE;

    fn no_clock() -> Duration {
        Duration::ZERO
    }

    #[test]
    fn shadow_walk_is_l_plus_two() {
        // buffer of L+1 addressable cells, then one redzone cell read
        let r = bench_size_right(BenchOp::Strlen, Backend::ShadowRedzone, &[10], 3, DEFAULT_REDZONE, &mut no_clock)
            .unwrap();
        assert_eq!(r[0].shadow_reads, 12);
        assert!(r[0].stable);
    }

    #[test]
    fn bounds_is_one_lookup() {
        let r = bench_size_right(BenchOp::Strlen, Backend::BoundsTable, &[1, 10, 1000], 2, DEFAULT_REDZONE, &mut no_clock)
            .unwrap();
        assert!(r.iter().all(|x| x.metadata_lookups == 1 && x.shadow_reads == 0));
    }

    #[test]
    fn size_right_op_matches() {
        let r = bench_size_right(BenchOp::SizeRight, Backend::ShadowRedzone, &[100], 1, DEFAULT_REDZONE, &mut no_clock)
            .unwrap();
        assert_eq!(r[0].shadow_reads, 102);
    }
}
