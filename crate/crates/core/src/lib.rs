//! Charging-station placement from individual mobility traces.
//!
//! Traces are reduced to stays, long trips become arrival counts per grid
//! cell and time slot, and the counts weight a set-cover instance whose
//! irredundant covers are candidate station layouts.

pub mod cover;
pub mod demand;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod ingest;
pub mod solvers;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};

/// Library version, recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
