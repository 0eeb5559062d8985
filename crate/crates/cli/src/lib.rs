//! Config-driven experiment runner: every command reads an optional TOML
//! file, applies command-line overrides, runs one operation of
//! `flashcards-core` and writes its artifacts plus a `manifest.json` into
//! the `--out` directory.

pub mod commands;
pub mod config;
pub mod manifest;

pub use manifest::RunManifest;

use flashcards_core::ErrorClass;

/// Process exit code for an error: 2 configuration, 3 data, 4 numeric.
pub fn exit_code(err: &flashcards_core::Error) -> u8 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}
