//! Flat-pack furniture assembly: geometry, model format, the connect
//! predicate and snap-and-weld, the cursor agents, an episodic environment,
//! a scripted oracle and deterministic trajectory recording.

// `!(x >= lo)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod assembly;
pub mod env;
pub mod geom;
pub mod model;
pub mod oracle;
pub mod record;
pub mod weld;

/// Identifies the simulation semantics; recorded in trajectory headers.
pub const ENGINE_VERSION: &str = concat!("flatpack-", env!("CARGO_PKG_VERSION"));
