//! Intentionally empty. The acceptance suite lives in `tests/acceptance.rs`
//! and runs with `cargo test -p soundsquat-acceptance`.
