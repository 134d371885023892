//! Command-line front end for `sizeright-core`: report rendering and the
//! randomized workload checks shared by the CLI and the acceptance suite.

pub mod report;
pub mod verify;
