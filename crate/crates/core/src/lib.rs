//! Bounds-introspection runtime.
//!
//! Allocations live in an [`arena::Arena`] that serves as ground truth. A
//! metadata [`backend`] answers `size_right` queries (bytes to the right of a
//! reference inside its allocation) and checks individual accesses. The
//! [`policy`] engine routes every checked access through one of the recovery
//! policies, and [`libc`] holds both the ISO-C reference string functions and
//! the introspection interceptors built on top of them. [`scenario`] is a small
//! DSL interpreter with a bundled CVE corpus; [`bench`] counts introspection
//! cost per backend.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod arena;
pub mod backend;
pub mod bench;
mod error;
pub mod libc;
pub mod policy;
pub mod scenario;

pub use arena::{AllocId, Allocation, Arena, Ref, Region};
pub use backend::{AccessKind, AccessVerdict, AnyBackend, Backend, Metadata, SizeEstimate};
pub use error::Error;
pub use policy::{Machine, Policy};
