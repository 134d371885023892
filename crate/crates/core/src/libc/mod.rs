//! String and memory functions.
//!
//! [`reference`] follows ISO C and performs every byte of traffic as a checked
//! access. [`intercept`] wraps the reference functions with `size_right`-based
//! clamping, the way an `ORIGINAL(...)` interceptor delegates to libc.

use core::fmt;
use core::str::FromStr;

use crate::arena::Ref;
use crate::backend::UnknownName;

pub mod intercept;
pub mod reference;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LibcFn {
    Strlen,
    Strnlen,
    Strcpy,
    Strncpy,
    Strcat,
    Memcpy,
    Memset,
    Gets,
    Fgets,
}

impl LibcFn {
    pub const ALL: [LibcFn; 9] = [
        LibcFn::Strlen,
        LibcFn::Strnlen,
        LibcFn::Strcpy,
        LibcFn::Strncpy,
        LibcFn::Strcat,
        LibcFn::Memcpy,
        LibcFn::Memset,
        LibcFn::Gets,
        LibcFn::Fgets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LibcFn::Strlen => "strlen",
            LibcFn::Strnlen => "strnlen",
            LibcFn::Strcpy => "strcpy",
            LibcFn::Strncpy => "strncpy",
            LibcFn::Strcat => "strcat",
            LibcFn::Memcpy => "memcpy",
            LibcFn::Memset => "memset",
            LibcFn::Gets => "gets",
            LibcFn::Fgets => "fgets",
        }
    }
}

impl fmt::Display for LibcFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LibcFn {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LibcFn::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or(UnknownName)
    }
}

/// A fully-typed call. `gets`/`fgets` read from the machine's input stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LibcCall {
    Strlen { s: Ref },
    Strnlen { s: Ref, n: usize },
    Strcpy { dest: Ref, src: Ref },
    Strncpy { dest: Ref, src: Ref, n: usize },
    Strcat { dest: Ref, src: Ref },
    Memcpy { dest: Ref, src: Ref, n: usize },
    Memset { dest: Ref, c: u8, n: usize },
    Gets { s: Ref },
    Fgets { s: Ref, n: usize },
}

impl LibcCall {
    pub fn function(&self) -> LibcFn {
        match self {
            LibcCall::Strlen { .. } => LibcFn::Strlen,
            LibcCall::Strnlen { .. } => LibcFn::Strnlen,
            LibcCall::Strcpy { .. } => LibcFn::Strcpy,
            LibcCall::Strncpy { .. } => LibcFn::Strncpy,
            LibcCall::Strcat { .. } => LibcFn::Strcat,
            LibcCall::Memcpy { .. } => LibcFn::Memcpy,
            LibcCall::Memset { .. } => LibcFn::Memset,
            LibcCall::Gets { .. } => LibcFn::Gets,
            LibcCall::Fgets { .. } => LibcFn::Fgets,
        }
    }
}

/// Return value of a libc call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ret {
    Size(usize),
    Ptr(Ref),
    Null,
}

impl From<Option<Ref>> for Ret {
    fn from(r: Option<Ref>) -> Self {
        r.map_or(Ret::Null, Ret::Ptr)
    }
}
