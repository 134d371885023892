//! Seeded randomized workloads for the library-level properties: interceptor
//! transparency, `size_right` exactness and failure-oblivious semantics.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sizeright_core::arena::{Ref, Region};
use sizeright_core::backend::{Backend, SizeEstimate};
use sizeright_core::libc::{reference, LibcCall, LibcFn, Ret};
use sizeright_core::policy::{execute, EventKind, Machine, Policy};
use sizeright_core::AnyBackend;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub cases: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

impl Tally {
    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }
}

fn machine(backend: Backend, policy: Policy) -> Machine {
    Machine::new(AnyBackend::with_default_redzone(backend), policy)
}

fn bytes(rng: &mut StdRng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen()).collect()
}

fn text(rng: &mut StdRng, max: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max);
    (0..len).map(|_| rng.gen_range(1..=255)).collect()
}

/// Buffer layout: garbage lead, the body the call sees, garbage tail.
#[derive(Clone, Debug)]
struct Buf {
    lead: usize,
    content: Vec<u8>,
}

impl Buf {
    fn new(rng: &mut StdRng, body: Vec<u8>) -> Buf {
        let lead = rng.gen_range(0..=4);
        let tail = rng.gen_range(0..=6);
        let mut content = bytes(rng, lead);
        content.extend(body);
        content.extend(bytes(rng, tail));
        Buf { lead, content }
    }

    /// At least `need` writable bytes of garbage.
    fn room(rng: &mut StdRng, need: usize) -> Buf {
        let len = need + rng.gen_range(0..6);
        let body = bytes(rng, len);
        Buf::new(rng, body)
    }

    fn string(rng: &mut StdRng, max: usize) -> Buf {
        let mut t = text(rng, max);
        t.push(0);
        Buf::new(rng, t)
    }
}

#[derive(Clone, Debug)]
struct Input {
    dest: Buf,
    src: Buf,
    stdin: Vec<u8>,
    n: usize,
    c: u8,
}

fn stdin_bytes(rng: &mut StdRng) -> Vec<u8> {
    let len = rng.gen_range(0..48);
    (0..len)
        .map(|_| match rng.gen_range(0..5) {
            0 => b'\n',
            1 => 0,
            _ => rng.gen_range(1..=255),
        })
        .collect()
}

/// An input on which the ISO function stays within bounds.
fn valid_input(rng: &mut StdRng, f: LibcFn) -> Input {
    let empty = Buf { lead: 0, content: vec![] };
    let mut input = Input {
        dest: empty.clone(),
        src: empty,
        stdin: vec![],
        n: 0,
        c: rng.gen(),
    };
    match f {
        LibcFn::Strlen => input.src = Buf::string(rng, 40),
        LibcFn::Strnlen => {
            input.src = Buf::string(rng, 40);
            input.n = rng.gen_range(0..60);
        }
        LibcFn::Strcpy => {
            input.src = Buf::string(rng, 40);
            let need = input.src.content.len() - input.src.lead;
            input.dest = Buf::room(rng, need);
        }
        LibcFn::Strncpy => {
            input.src = Buf::string(rng, 40);
            input.n = rng.gen_range(0..48);
            input.dest = Buf::room(rng, input.n);
        }
        LibcFn::Strcat => {
            let src = text(rng, 30);
            let prefix = text(rng, 20);
            let size = prefix.len() + src.len() + 1 + rng.gen_range(0..6);
            let mut body = prefix;
            body.push(0);
            body.resize(size, 0xAA);
            input.dest = Buf::new(rng, body);
            let mut s = src;
            s.push(0);
            input.src = Buf::new(rng, s);
        }
        LibcFn::Memcpy => {
            input.n = rng.gen_range(0..48);
            input.dest = Buf::room(rng, input.n);
            input.src = Buf::room(rng, input.n);
        }
        LibcFn::Memset => {
            input.n = rng.gen_range(0..64);
            input.dest = Buf::room(rng, input.n);
        }
        LibcFn::Gets => {
            input.stdin = stdin_bytes(rng);
            let line = input.stdin.iter().position(|&b| b == b'\n').unwrap_or(input.stdin.len());
            input.dest = Buf::room(rng, line + 1);
        }
        LibcFn::Fgets => {
            input.stdin = stdin_bytes(rng);
            input.n = rng.gen_range(0..40);
            input.dest = Buf::room(rng, input.n);
        }
    }
    input
}

/// Mostly constructed-valid inputs, plus some with an arbitrary count and a
/// small destination, kept only if the reference stays in bounds on them.
fn input(rng: &mut StdRng, f: LibcFn) -> Input {
    loop {
        let mut input = valid_input(rng, f);
        if rng.gen_bool(0.75) {
            return input;
        }
        input.n = rng.gen_range(0..64);
        input.dest = Buf::room(rng, 0);
        if rng.gen_bool(0.5) {
            input.stdin.truncate(rng.gen_range(0..3));
        }
        let probe = observe(f, &input, Backend::BoundsTable, Policy::Abort);
        if probe.ret.is_some() && probe.events == 0 {
            return input;
        }
    }
}

#[derive(Debug, PartialEq)]
struct Observed {
    ret: Option<Ret>,
    memory: Vec<Vec<u8>>,
    stdin_pos: usize,
    events: usize,
    spilled: usize,
}

fn place(m: &mut Machine, b: &Buf, tag: &str) -> Ref {
    let base = m.alloc(b.content.len().max(1), Region::Heap, tag).expect("nonzero size");
    m.arena_mut().raw_write(base, &b.content).expect("fits");
    Ref { offset: b.lead, ..base }
}

fn observe(f: LibcFn, input: &Input, backend: Backend, policy: Policy) -> Observed {
    let mut m = machine(backend, policy);
    let dest = place(&mut m, &input.dest, "dest");
    let src = place(&mut m, &input.src, "src");
    m.stdin_mut().feed(&input.stdin);
    let n = input.n;
    let call = match f {
        LibcFn::Strlen => LibcCall::Strlen { s: src },
        LibcFn::Strnlen => LibcCall::Strnlen { s: src, n },
        LibcFn::Strcpy => LibcCall::Strcpy { dest, src },
        LibcFn::Strncpy => LibcCall::Strncpy { dest, src, n },
        LibcFn::Strcat => LibcCall::Strcat { dest, src },
        LibcFn::Memcpy => LibcCall::Memcpy { dest, src, n },
        LibcFn::Memset => LibcCall::Memset { dest, c: input.c, n },
        LibcFn::Gets => LibcCall::Gets { s: dest },
        LibcFn::Fgets => LibcCall::Fgets { s: dest, n },
    };
    let ret = execute(&mut m, &call).ok();
    Observed {
        ret,
        memory: m.arena().iter().map(|(_, a)| a.content().to_vec()).collect(),
        stdin_pos: m.stdin().position(),
        events: m.events().len(),
        spilled: m.arena().spilled_bytes(),
    }
}

/// `cs_f` against `ref_f` on `cases` valid inputs: memory, return value and
/// stream position must agree, and neither side may log an event.
pub fn transparency(f: LibcFn, backend: Backend, cases: u64, seed: u64) -> Tally {
    let mut rng = StdRng::seed_from_u64(seed ^ (f as u64) << 8 ^ backend as u64);
    let mut tally = Tally::default();
    for _ in 0..cases {
        let input = input(&mut rng, f);
        let want = observe(f, &input, backend, Policy::Abort);
        let got = observe(f, &input, backend, Policy::ContextAware);
        let ok = want.ret.is_some() && want.events == 0 && want.spilled == 0 && got == want;
        tally.record(ok, || format!("{f} on {backend:?}: {input:?}\n ref {want:?}\n cs  {got:?}"));
    }
    tally
}

/// Random heaps with some frees; probes every backend at a random offset.
pub fn size_right_exactness(cases: u64, seed: u64) -> Tally {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for _ in 0..cases {
        let sizes: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(1..200)).collect();
        let freed: Vec<bool> = sizes.iter().map(|_| rng.gen_bool(0.3)).collect();
        let pick = rng.gen_range(0..sizes.len());
        // bias toward the interesting boundary offsets
        let offset = match rng.gen_range(0..4) {
            0 => sizes[pick],
            1 => sizes[pick] - 1,
            _ => rng.gen_range(0..260),
        };
        for backend in Backend::ALL {
            let mut m = machine(backend, Policy::ContextAware);
            let refs: Vec<Ref> = sizes
                .iter()
                .map(|&s| m.alloc(s, Region::Heap, "a").expect("nonzero size"))
                .collect();
            for (r, &f) in refs.iter().zip(&freed) {
                if f {
                    let _ = m.free(*r);
                }
            }
            let est = m.size_right(Ref { offset, ..refs[pick] });
            let want = match backend {
                Backend::Null => SizeEstimate::Unknown,
                _ if freed[pick] || offset >= sizes[pick] => SizeEstimate::Invalid,
                _ => SizeEstimate::Exact(sizes[pick] - offset),
            };
            tally.record(est == want, || {
                format!("{backend:?} sizes={sizes:?} freed={freed:?} probe=({pick},{offset}) got {est:?} want {want:?}")
            });
        }
    }
    tally
}

/// Out-of-bounds write storms under ClassicFo must leave tracked bytes as an
/// in-bounds-only model predicts, manufactured reads must alternate 0,1, and
/// `ref_strlen` on an unterminated buffer must stop at its length.
pub fn classic_fo(cases: u64, seed: u64) -> Tally {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for _ in 0..cases {
        for backend in [Backend::BoundsTable, Backend::ShadowRedzone] {
            let mut m = machine(backend, Policy::ClassicFo);
            let sizes: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(1..48)).collect();
            let refs: Vec<Ref> = sizes
                .iter()
                .map(|&s| m.alloc(s, Region::Heap, "a").expect("nonzero size"))
                .collect();
            let mut model: Vec<Vec<u8>> = sizes.iter().map(|&s| vec![0; s]).collect();
            for _ in 0..rng.gen_range(1..40) {
                let i = rng.gen_range(0..refs.len());
                let offset = rng.gen_range(0..96);
                let byte = rng.gen();
                let _ = m.store(Ref { offset, ..refs[i] }, byte);
                if offset < sizes[i] {
                    model[i][offset] = byte;
                }
            }
            let contents: Vec<Vec<u8>> = refs
                .iter()
                .map(|r| m.arena().get(r.alloc).map(|a| a.content().to_vec()).unwrap_or_default())
                .collect();
            let writes_ok = contents == model && m.arena().spilled_bytes() == 0;

            let base = refs[0];
            let size = sizes[0];
            let reads = rng.gen_range(1..20);
            let got: Vec<u8> = (0..reads)
                .map(|k| m.load(Ref { offset: size + k, ..base }).unwrap_or(0xFF))
                .collect();
            let want: Vec<u8> = (0..reads).map(|k| (k % 2) as u8).collect();
            let reads_ok = got == want
                && m.events().iter().any(|e| e.kind == EventKind::ManufacturedRead);

            let mut s = machine(backend, Policy::ClassicFo);
            let t = text(&mut rng, 63);
            let len = t.len().max(1);
            let r = s.alloc(len, Region::Heap, "s").expect("nonzero size");
            let fill: Vec<u8> = if t.is_empty() { vec![b'x'] } else { t };
            s.arena_mut().raw_write(r, &fill).expect("fits");
            let strlen_ok = reference::ref_strlen(&mut s, r).ok() == Some(len);

            tally.record(writes_ok && reads_ok && strlen_ok, || {
                format!("{backend:?}: writes {writes_ok} reads {reads_ok} ({got:?}) strlen {strlen_ok}")
            });
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        for f in LibcFn::ALL {
            for b in Backend::ALL {
                let t = transparency(f, b, 50, 1);
                assert!(t.passed(), "{:?}", t.first_failure);
            }
        }
        assert!(size_right_exactness(200, 2).passed());
        assert!(classic_fo(100, 3).passed());
    }

    #[test]
    fn detects_a_broken_comparison() {
        // an input the reference overflows must not count as transparent
        let mut rng = StdRng::seed_from_u64(9);
        let mut input = valid_input(&mut rng, LibcFn::Memset);
        input.n = input.dest.content.len() + 10;
        let want = observe(LibcFn::Memset, &input, Backend::BoundsTable, Policy::Abort);
        let got = observe(LibcFn::Memset, &input, Backend::BoundsTable, Policy::ContextAware);
        assert!(want.ret.is_none());
        assert_ne!(got, want);
    }
}
