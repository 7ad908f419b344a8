//! Acceptance suite for the workspace. The criteria live in `tests/acceptance.rs`.
