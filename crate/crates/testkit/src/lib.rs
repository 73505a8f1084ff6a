//! Test support: brute-force oracles, reference cases, seeded synthetic
//! corpora, simulated annotators and the fixture bundle used by the
//! end-to-end tests and by `run-all` in fixture mode.
//!
//! Regenerate the checked-in bundle with
//! `MORALFRAME_REGENERATE=1 cargo test -p moralframe-testkit --test bundle`.

pub mod bundle;
pub mod cases;
pub mod contract;
pub mod differential;
pub mod oracles;
pub mod simulate;
pub mod synth;
