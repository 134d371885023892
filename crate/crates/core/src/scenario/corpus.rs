//! Desk-scale transcriptions of five libc-related buffer overflows.
//!
//! Each scenario keeps the call shape of the original bug (buffer sizes are
//! representative, not replicas) and ends with a follow-up request showing
//! whether the program is still serving.

use alloc::vec::Vec;

use super::{parse, Scenario};

pub const SOURCES: [(&str, &str); 5] = [
    ("dnsmasq-memcpy", include_str!("../../corpus/dnsmasq-memcpy.scn")),
    ("dnsmasq-memset", include_str!("../../corpus/dnsmasq-memset.scn")),
    ("libxml2-strcat", include_str!("../../corpus/libxml2-strcat.scn")),
    ("graphicsmagick-strncpy", include_str!("../../corpus/graphicsmagick-strncpy.scn")),
    ("lightftp-strcat", include_str!("../../corpus/lightftp-strcat.scn")),
];

pub fn corpus() -> Vec<Scenario> {
    SOURCES
        .iter()
        .map(|(name, text)| parse(name, text).expect("bundled scenario parses"))
        .collect()
}

pub fn get(name: &str) -> Option<Scenario> {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| parse(n, text).expect("bundled scenario parses"))
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
