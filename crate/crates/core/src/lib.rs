//! Knowledge selection over document semantic graphs.
//!
//! Documents are parsed into sentence-level AMR graphs, stitched into a
//! document graph through coreference, and scored against dialog context by
//! an edge-aware graph attention network trained with a joint sentence and
//! concept objective.

pub mod amr;
pub mod config;
pub mod semgraph;
pub mod tensor;
pub mod dialog;
pub mod egat;
pub mod harness;

/// Number of most recent utterances forming a turn's dialog context.
pub const DEFAULT_CONTEXT_WINDOW: usize = 2;
