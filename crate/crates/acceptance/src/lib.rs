//! Acceptance suite for `twoparam-sl`. The checks live in `tests/acceptance.rs`;
//! this crate is a separate workspace member so that the suite runs after the
//! library's own tests.
