//! Test support for the rexkb crates.
//!
//! `oracle` holds brute-force reference computations written independently of
//! the engine's index and suggester code paths; `gen` produces random
//! French-like corpora; `fixtures` builds engines and small knowledge bases;
//! `scenarios` runs whole acceptance checks at a chosen size.

pub mod fixtures;
pub mod gen;
pub mod oracle;
pub mod scenarios;
