//! Acceptance suite for `emff`; the checks live in `tests/acceptance.rs`.
//!
//! Kept as its own package so that a failing criterion does not stop the
//! core crate's test binaries under cargo's fail-fast ordering.
